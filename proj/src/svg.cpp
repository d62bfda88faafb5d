#include "collapselab/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace collapselab {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 460.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 170.0;  // legend / colorbar
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const std::array<const char*, 10> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

struct Scale {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double px0 = 0.0, px1 = 1.0;

    static Scale fit(const std::vector<double>& vals, bool log, double px0, double px1) {
        Scale s;
        s.log = log;
        s.px0 = px0;
        s.px1 = px1;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : vals) {
            if (!std::isfinite(v) || (log && v <= 0.0)) continue;
            const double t = log ? std::log10(v) : v;
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-300 * std::max(1.0, std::abs(lo)) || hi == lo) {
            const double pad = std::max(std::abs(lo) * 0.05, 0.5);
            lo -= pad;
            hi += pad;
        }
        s.lo = lo;
        s.hi = hi;
        return s;
    }

    bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
    double raw(double v) const { return log ? std::log10(v) : v; }
    double map(double v) const { return px0 + (raw(v) - lo) / (hi - lo) * (px1 - px0); }

    std::vector<double> ticks() const {
        std::vector<double> out;
        if (log) {
            const int a = static_cast<int>(std::ceil(lo - 1e-9)), b = static_cast<int>(std::floor(hi + 1e-9));
            const int step = std::max(1, (b - a) / 6 + 1);
            for (int e = a; e <= b; e += step) out.push_back(std::pow(10.0, e));
            if (out.empty()) out = {std::pow(10.0, lo), std::pow(10.0, hi)};
            return out;
        }
        const double span = hi - lo;
        const double raw_step = span / 5.0;
        const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
        double step = mag;
        for (double m : {1.0, 2.0, 5.0, 10.0})
            if (m * mag >= raw_step) {
                step = m * mag;
                break;
            }
        for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
            out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
        return out;
    }
};

std::string color_map(double t) {
    // Linear interpolation through a few viridis stops.
    static const std::array<std::array<double, 3>, 5> stops = {{{68, 1, 84}, {59, 82, 139}, {33, 145, 140},
                                                                {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(i);
    char buf[8];
    int rgb[3];
    for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

void header(std::ostringstream& os, const PlotHint& hint) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!hint.title.empty())
        os << "<text x=\"" << fmt((kLeft + kWidth - kRight) / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
           << escape(hint.title) << "</text>\n";
}

void axes(std::ostringstream& os, const Scale& xs, const Scale& ys, const std::string& xlabel,
          const std::string& ylabel) {
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    os << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\""
       << fmt(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : xs.ticks()) {
        const double px = xs.map(t);
        os << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y0 + 5)
           << "\" stroke=\"black\"/><text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 18)
           << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    for (double t : ys.ticks()) {
        const double py = ys.map(t);
        os << "<line x1=\"" << fmt(x0 - 5) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x0) << "\" y2=\"" << fmt(py)
           << "\" stroke=\"black\"/><text x=\"" << fmt(x0 - 8) << "\" y=\"" << fmt(py + 4)
           << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
    }
    os << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 18) << "\" text-anchor=\"middle\">"
       << escape(xlabel) << (xs.log ? " (log)" : "") << "</text>\n";
    os << "<text x=\"18\" y=\"" << fmt((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << fmt((y0 + y1) / 2) << ")\">" << escape(ylabel) << (ys.log ? " (log)" : "") << "</text>\n";
}

std::string render_lines(const SweepGrid& grid, const PlotHint& hint, const std::vector<std::string>& keys) {
    const auto& ax = grid.axes();
    const Axis& xa = ax[0];
    const bool log_x = hint.log_x || xa.log_scale;
    const std::size_t stride = grid.cell_count() / xa.values.size();  // cells per x value

    std::vector<double> all_y;
    for (const auto& k : keys)
        for (std::size_t c = 0; c < grid.cell_count(); ++c)
            if (!grid.failed(c)) all_y.push_back(grid.get(c, k));

    const Scale xs = Scale::fit(xa.values, log_x, kLeft, kWidth - kRight);
    const Scale ys = Scale::fit(all_y, hint.log_y, kHeight - kBottom, kTop);

    std::ostringstream os;
    header(os, hint);
    axes(os, xs, ys, xa.name, keys.size() == 1 ? keys[0] : "value");

    std::size_t series = 0;
    for (const auto& k : keys) {
        for (std::size_t rest = 0; rest < stride; ++rest, ++series) {
            const char* color = kPalette[series % kPalette.size()];
            std::string pts;
            auto flush = [&] {
                if (!pts.empty())
                    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts
                       << "\"/>\n";
                pts.clear();
            };
            for (std::size_t i = 0; i < xa.values.size(); ++i) {
                const std::size_t cell = i * stride + rest;
                const double x = xa.values[i];
                const double y = grid.failed(cell) ? std::numeric_limits<double>::quiet_NaN() : grid.get(cell, k);
                if (!xs.usable(x) || !ys.usable(y)) {
                    flush();
                    continue;
                }
                if (!pts.empty()) pts += ' ';
                pts += fmt(xs.map(x)) + ',' + fmt(ys.map(y));
            }
            flush();
            std::string label = k;
            if (stride > 1) {
                const auto idx = grid.unflatten(rest);
                for (std::size_t a = 1; a < ax.size(); ++a)
                    label += " " + ax[a].name + "=" + tick_label(ax[a].values[idx[a]]);
            }
            const double ly = kTop + 14.0 * static_cast<double>(series);
            if (ly < kHeight - kBottom)
                os << "<line x1=\"" << fmt(kWidth - kRight + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\""
                   << fmt(kWidth - kRight + 30) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
                   << "\" stroke-width=\"2\"/><text x=\"" << fmt(kWidth - kRight + 34) << "\" y=\"" << fmt(ly + 4)
                   << "\" font-size=\"10\">" << escape(label) << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string render_heatmap(const SweepGrid& grid, const PlotHint& hint, const std::string& key) {
    const auto& ax = grid.axes();
    if (ax.size() < 2) throw InvalidArgument("render_svg: a heatmap needs two axes");
    const Axis& xa = ax[0];
    const Axis& ya = ax[1];
    const std::size_t nx = xa.values.size(), ny = ya.values.size();
    const std::size_t inner = grid.cell_count() / (nx * ny);  // extra axes: first slice only

    std::vector<double> vals;
    for (std::size_t c = 0; c < grid.cell_count(); ++c)
        if (!grid.failed(c) && std::isfinite(grid.get(c, key))) vals.push_back(grid.get(c, key));
    double vlo = vals.empty() ? 0.0 : *std::min_element(vals.begin(), vals.end());
    double vhi = vals.empty() ? 1.0 : *std::max_element(vals.begin(), vals.end());
    if (vhi <= vlo) vhi = vlo + 1.0;

    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    const double cw = (x1 - x0) / static_cast<double>(nx), ch = (y0 - y1) / static_cast<double>(ny);

    // Cells are drawn on an index grid; tick positions interpolate the axis values.
    auto index_scale = [](const Axis& a, double px0, double px1) {
        Scale s;
        s.lo = 0.0;
        s.hi = static_cast<double>(a.values.size());
        s.px0 = px0;
        s.px1 = px1;
        return s;
    };
    const Scale xs = index_scale(xa, x0, x1), ys = index_scale(ya, y0, y1);

    std::ostringstream os;
    header(os, hint);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
            const std::size_t cell = (i * ny + j) * inner;
            const double v = grid.failed(cell) ? std::numeric_limits<double>::quiet_NaN() : grid.get(cell, key);
            const std::string color = std::isfinite(v) ? color_map((v - vlo) / (vhi - vlo)) : "#bbbbbb";
            os << "<rect x=\"" << fmt(x0 + cw * i) << "\" y=\"" << fmt(y0 - ch * (j + 1)) << "\" width=\"" << fmt(cw)
               << "\" height=\"" << fmt(ch) << "\" fill=\"" << color << "\"/>\n";
        }
    os << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\""
       << fmt(y0 - y1) << "\" fill=\"none\" stroke=\"black\"/>\n";
    auto index_ticks = [](std::size_t n) {
        std::vector<std::size_t> out;
        const std::size_t step = std::max<std::size_t>(1, n / 6);
        for (std::size_t i = 0; i < n; i += step) out.push_back(i);
        if (out.back() != n - 1) out.push_back(n - 1);
        return out;
    };
    for (std::size_t i : index_ticks(nx)) {
        const double px = xs.map(i + 0.5);
        os << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y0 + 5)
           << "\" stroke=\"black\"/><text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 18)
           << "\" text-anchor=\"middle\">" << tick_label(xa.values[i]) << "</text>\n";
    }
    for (std::size_t j : index_ticks(ny)) {
        const double py = ys.map(j + 0.5);
        os << "<line x1=\"" << fmt(x0 - 5) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x0) << "\" y2=\"" << fmt(py)
           << "\" stroke=\"black\"/><text x=\"" << fmt(x0 - 8) << "\" y=\"" << fmt(py + 4)
           << "\" text-anchor=\"end\">" << tick_label(ya.values[j]) << "</text>\n";
    }
    os << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 18) << "\" text-anchor=\"middle\">"
       << escape(xa.name) << (xa.log_scale ? " (log)" : "") << "</text>\n";
    os << "<text x=\"18\" y=\"" << fmt((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << fmt((y0 + y1) / 2) << ")\">" << escape(ya.name) << (ya.log_scale ? " (log)" : "") << "</text>\n";

    // Colorbar.
    const double bx = kWidth - kRight + 30, bw = 18;
    const int steps = 64;
    for (int s = 0; s < steps; ++s) {
        const double t = (s + 0.5) / steps;
        const double py = y0 - (y0 - y1) * (s + 1) / steps;
        os << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(py) << "\" width=\"" << fmt(bw) << "\" height=\""
           << fmt((y0 - y1) / steps + 0.5) << "\" fill=\"" << color_map(t) << "\"/>\n";
    }
    os << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(bw) << "\" height=\"" << fmt(y0 - y1)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int s = 0; s <= 4; ++s) {
        const double v = vlo + (vhi - vlo) * s / 4.0;
        const double py = y0 - (y0 - y1) * s / 4.0;
        os << "<text x=\"" << fmt(bx + bw + 6) << "\" y=\"" << fmt(py + 4) << "\">" << tick_label(v) << "</text>\n";
    }
    os << "<text x=\"" << fmt(bx + bw / 2) << "\" y=\"" << fmt(y1 - 8) << "\" text-anchor=\"middle\">" << escape(key)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace

std::string render_svg(const SweepGrid& grid, const PlotHint& hint) {
    if (grid.empty() || grid.keys().empty()) throw EmptyGrid("render_svg: grid has no cells or no numeric keys");
    std::vector<std::string> keys;
    for (const auto& k : hint.keys)
        if (std::find(grid.keys().begin(), grid.keys().end(), k) != grid.keys().end()) keys.push_back(k);
    if (keys.empty()) keys.push_back(grid.keys().front());
    if (hint.kind == PlotHint::Kind::heatmap) return render_heatmap(grid, hint, keys.front());
    return render_lines(grid, hint, keys);
}

} // namespace collapselab
