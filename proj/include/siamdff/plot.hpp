#pragma once

#include <string>
#include <vector>

#include "siamdff/metrics.hpp"

namespace siamdff {

/// Renders metric curves into a fixed 640x480 SVG: axes with labels, one
/// polyline per curve, and a small legend when labels are given. The CSV
/// files remain the authoritative data; this is a convenience view.
std::string render_curves_svg(const std::vector<MetricCurve>& curves,
                              const std::vector<std::string>& labels,
                              const std::string& x_label, const std::string& y_label);

}  // namespace siamdff
