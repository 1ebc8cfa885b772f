#pragma once

#include <string>
#include <vector>

namespace robustlaw {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool line = true;  ///< polyline, otherwise markers
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool logx = false;
  bool logy = false;
  bool diagonal = false;  ///< draw y = x
  std::vector<double> hlines;
  std::vector<Series> series;
};

/// Minimal standalone SVG document. Non-finite points (and non-positive ones
/// on log axes) are dropped.
std::string render_svg(const PlotSpec& spec);

}  // namespace robustlaw
