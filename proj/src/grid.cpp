#include "collapselab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "collapselab/io.hpp"

namespace collapselab {

SweepGrid::SweepGrid(std::vector<Axis> axes, std::vector<std::string> keys, std::vector<std::string> text_keys)
    : axes_(std::move(axes)), keys_(std::move(keys)), text_keys_(std::move(text_keys)) {
    std::size_t n = 1;
    for (const auto& a : axes_) {
        if (a.values.empty()) throw InvalidArgument("axis '" + a.name + "' has no values");
        bool up = true, down = true;
        for (std::size_t i = 1; i < a.values.size(); ++i) {
            up = up && a.values[i] > a.values[i - 1];
            down = down && a.values[i] < a.values[i - 1];
        }
        if (!up && !down) throw InvalidArgument("axis '" + a.name + "' is not strictly monotone");
        n *= a.values.size();
    }
    values_.assign(n * keys_.size(), std::nan(""));
    texts_.assign(n * text_keys_.size(), std::string());
    failed_.assign(n, false);
}

std::size_t SweepGrid::cell(const std::vector<std::size_t>& idx) const {
    if (idx.size() != axes_.size()) throw DimensionError("grid index has wrong arity");
    std::size_t c = 0;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        if (idx[a] >= axes_[a].values.size()) throw DimensionError("grid index out of range");
        c = c * axes_[a].values.size() + idx[a];
    }
    return c;
}

std::vector<std::size_t> SweepGrid::unflatten(std::size_t cell) const {
    std::vector<std::size_t> idx(axes_.size());
    for (std::size_t a = axes_.size(); a-- > 0;) {
        idx[a] = cell % axes_[a].values.size();
        cell /= axes_[a].values.size();
    }
    return idx;
}

double SweepGrid::coord(std::size_t cell, std::size_t a) const { return axes_.at(a).values[unflatten(cell)[a]]; }

std::size_t SweepGrid::key_index(const std::string& key) const {
    const auto it = std::find(keys_.begin(), keys_.end(), key);
    if (it == keys_.end()) throw InvalidArgument("unknown grid key '" + key + "'");
    return static_cast<std::size_t>(it - keys_.begin());
}

void SweepGrid::set(std::size_t cell, const std::string& key, double v) {
    values_.at(cell * keys_.size() + key_index(key)) = v;
}

void SweepGrid::set_text(std::size_t cell, const std::string& key, std::string v) {
    const auto it = std::find(text_keys_.begin(), text_keys_.end(), key);
    if (it == text_keys_.end()) throw InvalidArgument("unknown grid text key '" + key + "'");
    texts_.at(cell * text_keys_.size() + static_cast<std::size_t>(it - text_keys_.begin())) = std::move(v);
}

void SweepGrid::mark_failed(std::size_t cell, bool failed) { failed_.at(cell) = failed; }

double SweepGrid::get(std::size_t cell, const std::string& key) const {
    return values_.at(cell * keys_.size() + key_index(key));
}

const std::string& SweepGrid::text(std::size_t cell, const std::string& key) const {
    const auto it = std::find(text_keys_.begin(), text_keys_.end(), key);
    if (it == text_keys_.end()) throw InvalidArgument("unknown grid text key '" + key + "'");
    return texts_.at(cell * text_keys_.size() + static_cast<std::size_t>(it - text_keys_.begin()));
}

std::vector<double> SweepGrid::column(const std::string& key) const {
    const std::size_t k = key_index(key);
    std::vector<double> out(cell_count());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = values_[c * keys_.size() + k];
    return out;
}

void SweepGrid::write_csv(std::ostream& out) const {
    std::vector<std::string> row;
    for (const auto& a : axes_) row.push_back(a.name);
    for (const auto& k : keys_) row.push_back(k);
    for (const auto& k : text_keys_) row.push_back(k);
    row.push_back("failed");
    out << csv_row(row);
    for (std::size_t c = 0; c < cell_count(); ++c) {
        row.clear();
        const auto idx = unflatten(c);
        for (std::size_t a = 0; a < axes_.size(); ++a) row.push_back(format_double(axes_[a].values[idx[a]]));
        for (std::size_t k = 0; k < keys_.size(); ++k) row.push_back(failed_[c] ? std::string() : format_double(values_[c * keys_.size() + k]));
        for (std::size_t k = 0; k < text_keys_.size(); ++k) row.push_back(texts_[c * text_keys_.size() + k]);
        row.push_back(failed_[c] ? "1" : "0");
        out << csv_row(row);
    }
}

} // namespace collapselab
