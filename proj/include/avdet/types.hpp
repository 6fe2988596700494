#pragma once
#include <algorithm>

#include "avdet/errors.hpp"

namespace avdet {

// Axis-aligned box in image pixels, half-open convention not used: x_min < x_max.
struct BBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const { return x_min < x_max && y_min < y_max; }

  BBox clamped(double w, double h) const {
    return {std::max(0.0, x_min), std::max(0.0, y_min), std::min(w, x_max), std::min(h, y_max)};
  }
};

struct ScoredBox {
  BBox box;
  double confidence = 0.0;  // in [0, 1]
};

}  // namespace avdet
