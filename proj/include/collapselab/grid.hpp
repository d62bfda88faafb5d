#pragma once

// Rectangular result grid shared by every sweep. Cells are stored with the
// first axis varying slowest.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "collapselab/error.hpp"

namespace collapselab {

struct Axis {
    std::string name;
    std::vector<double> values;  // strictly monotone
    bool log_scale = false;
};

class SweepGrid {
public:
    SweepGrid() = default;
    /// Throws InvalidArgument when an axis is empty or not strictly monotone.
    SweepGrid(std::vector<Axis> axes, std::vector<std::string> keys, std::vector<std::string> text_keys = {});

    const std::vector<Axis>& axes() const noexcept { return axes_; }
    const std::vector<std::string>& keys() const noexcept { return keys_; }
    const std::vector<std::string>& text_keys() const noexcept { return text_keys_; }
    std::size_t cell_count() const noexcept { return failed_.size(); }
    bool empty() const noexcept { return failed_.empty() || (keys_.empty() && text_keys_.empty()); }

    /// Flat index of a multi-index (one entry per axis).
    std::size_t cell(const std::vector<std::size_t>& idx) const;
    std::vector<std::size_t> unflatten(std::size_t cell) const;
    /// Axis value of `cell` along axis `a`.
    double coord(std::size_t cell, std::size_t a) const;

    std::size_t key_index(const std::string& key) const;
    void set(std::size_t cell, const std::string& key, double v);
    void set_text(std::size_t cell, const std::string& key, std::string v);
    void mark_failed(std::size_t cell, bool failed = true);

    double get(std::size_t cell, const std::string& key) const;
    const std::string& text(std::size_t cell, const std::string& key) const;
    bool failed(std::size_t cell) const { return failed_.at(cell); }
    /// Column of `key` over all cells, in cell order.
    std::vector<double> column(const std::string& key) const;

    /// Header: axis names, numeric keys, text keys, then `failed`.
    void write_csv(std::ostream& out) const;

private:
    std::vector<Axis> axes_;
    std::vector<std::string> keys_;
    std::vector<std::string> text_keys_;
    std::vector<double> values_;  // cell-major, keys_.size() per cell
    std::vector<std::string> texts_;
    std::vector<bool> failed_;
};

} // namespace collapselab
