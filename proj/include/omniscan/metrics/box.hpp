#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace omniscan::metrics {

/// Axis-aligned box in pixels, (x0, y0) top-left, (x1, y1) bottom-right.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool valid() const { return x0 < x1 && y0 < y1; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
};

struct Detection {
  std::size_t class_id = 0;
  double score = 0;
  Box box;
};

struct GroundTruth {
  std::size_t class_id = 0;
  Box box;
};

/// Intersection over union; 0 when disjoint. Throws std::invalid_argument for a degenerate box.
double iou(const Box& a, const Box& b);

/// Clips to [0, width] x [0, height].
Box clip(const Box& b, double width, double height);

}  // namespace omniscan::metrics
