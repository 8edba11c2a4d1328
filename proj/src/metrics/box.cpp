#include "omniscan/metrics/box.hpp"

#include <algorithm>
#include <stdexcept>

namespace omniscan::metrics {

namespace {

std::string describe(const Box& b) {
  return "(" + std::to_string(b.x0) + ", " + std::to_string(b.y0) + ", " + std::to_string(b.x1) + ", " +
         std::to_string(b.y1) + ")";
}

}  // namespace

double iou(const Box& a, const Box& b) {
  if (!a.valid()) throw std::invalid_argument("iou: degenerate box " + describe(a));
  if (!b.valid()) throw std::invalid_argument("iou: degenerate box " + describe(b));
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box clip(const Box& b, double width, double height) {
  return {std::clamp(b.x0, 0.0, width), std::clamp(b.y0, 0.0, height), std::clamp(b.x1, 0.0, width),
          std::clamp(b.y1, 0.0, height)};
}

}  // namespace omniscan::metrics
