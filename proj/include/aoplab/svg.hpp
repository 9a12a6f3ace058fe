#pragma once

#include <string>
#include <vector>

namespace aoplab {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal deterministic line plot: fixed 640x420 canvas, axes with value
/// labels, one polyline per series. Output is plain well-formed XML so the
/// bytes depend only on the inputs.
std::string render_line_plot(const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<SvgSeries>& series);

}  // namespace aoplab
