#pragma once

#include <string>
#include <vector>

namespace spinqnd::app::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// Draw markers instead of a polyline.
  bool points = false;
};

struct Reference {
  std::string label;
  double y = 0.0;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  std::vector<Reference> references;
};

/// Self-contained SVG document. Long series are decimated to at most
/// `max_points` vertices.
std::string render(const Plot& plot, std::size_t max_points = 2000);

}  // namespace spinqnd::app::svg
