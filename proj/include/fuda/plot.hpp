#pragma once

#include <string>
#include <vector>

namespace fuda {

/// One polyline; NaN y values break the line.
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Self-contained SVG line chart with axes, ticks and a legend.
std::string render_svg(const Chart& chart);
void write_svg(const std::string& path, const Chart& chart);

}  // namespace fuda
