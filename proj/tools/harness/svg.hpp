#pragma once

// Minimal SVG 1.1 line charts: axes with ticks, a legend, optional log axes.

#include <string>
#include <vector>

namespace harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  ///< empty picks from the palette
  bool dashed = false;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  double width = 720;
  double height = 450;
  std::vector<Series> series;

  /// Points that are non-finite, or non-positive on a log axis, are skipped.
  std::string render() const;
};

}  // namespace harness
