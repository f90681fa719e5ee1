#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "srf/error.hpp"

namespace srf::layout {

inline constexpr double kMinBoxArea = 0.01;

/// Normalized box, origin top-left. Plain value; `validate` enforces the
/// canvas invariants at boundaries where boxes enter the system.
struct BBox {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }

  static BBox canvas() { return {0.0, 0.0, 1.0, 1.0}; }

  static BBox centered(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool is_valid(double min_area = kMinBoxArea, double tol = 1e-9) const {
    return x0 >= -tol && y0 >= -tol && x1 <= 1.0 + tol && y1 <= 1.0 + tol && x0 < x1 && y0 < y1 &&
           area() >= min_area - tol;
  }

  void validate(double min_area = kMinBoxArea) const {
    if (!is_valid(min_area))
      throw Error(ErrorCode::InvalidBox, "box (" + std::to_string(x0) + "," + std::to_string(y0) + "," +
                                             std::to_string(x1) + "," + std::to_string(y1) +
                                             ") violates canvas bounds or minimum area");
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double center_distance(const BBox& a, const BBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

inline bool contains(const BBox& outer, const BBox& inner, double tol = 1e-9) {
  return inner.x0 >= outer.x0 - tol && inner.y0 >= outer.y0 - tol && inner.x1 <= outer.x1 + tol &&
         inner.y1 <= outer.y1 + tol;
}

}  // namespace srf::layout
