#pragma once

// Minimal self-contained SVG charts for sweep grids.

#include <string>

#include "collapselab/experiments.hpp"
#include "collapselab/grid.hpp"

namespace collapselab {

/// Lines: x is the first axis, one polyline per key (and per combination of
/// the remaining axes). Heatmap: first axis on x, second on y, colored by the
/// first key, with a colorbar. Failed or non-finite cells are skipped (lines)
/// or drawn gray (heatmap). Throws EmptyGrid when there is nothing to draw.
std::string render_svg(const SweepGrid& grid, const PlotHint& hint);

} // namespace collapselab
