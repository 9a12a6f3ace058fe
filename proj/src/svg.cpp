#include "aoplab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace aoplab {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 616, kTop = 40, kBottom = 380;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_line_plot(const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<SvgSeries>& series) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (!(xmin < xmax)) { xmin -= 0.5; xmax += 0.5; }
  if (!(ymin < ymax)) { ymin -= 0.5; ymax += 0.5; }

  const auto px = [&](double x) {
    return kLeft + (x - xmin) / (xmax - xmin) * (kRight - kLeft);
  };
  const auto py = [&](double y) {
    return kBottom - (y - ymin) / (ymax - ymin) * (kBottom - kTop);
  };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
         "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) +
         " " + num(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + escape_xml(title) +
         "</text>\n";

  // Axes.
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" +
         num(kRight) + "\" y2=\"" + num(kBottom) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" +
         num(kLeft) + "\" y2=\"" + num(kBottom) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(kBottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + num(fx) + "</text>\n";
    out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(fy) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + num(fy) + "</text>\n";
  }
  out += "<text x=\"" + num((kLeft + kRight) / 2) + "\" y=\"" +
         num(kHeight - 6) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"13\">" + escape_xml(x_label) +
         "</text>\n";
  out += "<text x=\"16\" y=\"" + num((kTop + kBottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 16 " +
         num((kTop + kBottom) / 2) + ")\">" + escape_xml(y_label) + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % (sizeof kColors / sizeof kColors[0])];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!points.empty()) points += ' ';
      points += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    out += "<text x=\"" + num(kRight - 4) + "\" y=\"" +
           num(kTop + 16.0 * static_cast<double>(si + 1)) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"" + color + "\">" + escape_xml(s.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace aoplab
