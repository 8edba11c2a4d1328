#pragma once

#include <array>
#include <vector>

#include "omniscan/metrics/box.hpp"
#include "omniscan/net/model.hpp"

namespace omniscan::net {

using metrics::Box;
using metrics::Detection;
using metrics::GroundTruth;

/// Raw (dx, dy, tw, th) at a cell: center = (grid + d) * stride, size = exp(t) * stride.
struct BoxCode {
  double dx = 0, dy = 0, tw = 0, th = 0;
};

Box decode_box(const BoxCode& code, std::size_t gx, std::size_t gy, std::size_t stride);
/// Inverse of decode_box. Requires a valid box.
BoxCode encode_box(const Box& box, std::size_t gx, std::size_t gy, std::size_t stride);

struct Assignment {
  std::size_t level = 0;  // index into kStrides
  std::size_t gx = 0, gy = 0;
};

/// Level whose stride is nearest sqrt(area) in log scale (ties to the smaller
/// stride), at the cell holding the box center, clamped to the grid.
Assignment assign_level(const Box& box, std::size_t input_width, std::size_t input_height);

/// Greedy per-class suppression over detections sorted by descending score:
/// a box survives unless a kept box of its class overlaps it above nms_iou.
std::vector<Detection> nms(std::vector<Detection> detections, double nms_iou);

struct DecodeOptions {
  double conf_threshold = 0.5;
  double nms_iou = 0.5;
  std::size_t max_detections = 100;
  double image_width = 0, image_height = 0;  // clip bounds
};

/// Raw head maps of one level as plain tensors.
template <typename T>
struct LevelMaps {
  Tensor<T> cls, box, obj;
  std::size_t stride = 0;
};

template <typename T>
std::vector<LevelMaps<T>> level_maps(const std::vector<LevelOutput<T>>& outputs);

/// Per image: score = sigmoid(obj) * sigmoid(best class logit); threshold, decode,
/// clip, drop degenerate boxes, class-wise NMS, sort by descending score.
/// Throws std::invalid_argument for thresholds outside [0, 1].
template <typename T>
std::vector<std::vector<Detection>> decode(const std::vector<LevelMaps<T>>& levels, const DecodeOptions& opt);

}  // namespace omniscan::net
