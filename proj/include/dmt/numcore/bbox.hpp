#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmt {

/// Axis-aligned box, top-left corner plus size, in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  static BBox absent() {
    const double n = std::numeric_limits<double>::quiet_NaN();
    return {n, n, n, n};
  }
  static BBox from_center(double cx, double cy, double w, double h) { return {cx - 0.5 * w, cy - 0.5 * h, w, h}; }

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool present() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Clips the box to [0, width]×[0, height], keeping at least `min_size` pixels per side.
inline BBox clamp_box(const BBox& b, double width, double height, double min_size = 1.0) {
  const double w = std::clamp(b.w, min_size, width);
  const double h = std::clamp(b.h, min_size, height);
  return {std::clamp(b.x, 0.0, width - w), std::clamp(b.y, 0.0, height - h), w, h};
}

}  // namespace dmt
