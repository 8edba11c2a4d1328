#pragma once

#include "omniscan/net/decode.hpp"
#include "omniscan/numerics/gradcheck.hpp"

namespace omniscan::net {

/// One positive cell per ground-truth box.
struct Positive {
  std::size_t image = 0, level = 0, gx = 0, gy = 0, class_id = 0;
  Box target;
};

/// Assigns every box via assign_level. A second box landing on an occupied
/// cell is dropped (the first keeps it).
std::vector<Positive> assign_targets(const std::vector<std::vector<GroundTruth>>& truths, std::size_t input_width,
                                     std::size_t input_height);

/// Sum over rows of 1 - IoU(decode(raw[i]), target[i]). raw is (P, 4) holding
/// (dx, dy, tw, th); cells and strides locate each row.
template <typename T>
Var<T> iou_loss(const Var<T>& raw, const std::vector<Positive>& positives);

struct LossParts {
  double iou = 0, obj = 0, cls = 0, total = 0;
  std::size_t positives = 0;
};

template <typename T>
struct DetectionLoss {
  Var<T> total;
  LossParts parts;
};

/// (w_iou * IoU loss + w_obj * objectness BCE over every cell + w_cls * one-hot
/// class BCE at positive cells) / max(1, positives).
template <typename T>
DetectionLoss<T> detection_loss(const std::vector<LevelOutput<T>>& outputs,
                                const std::vector<std::vector<GroundTruth>>& truths, const NetConfig& config);

/// Adds iou_loss (shape {P}) and detection_loss (tiny network at 64x64).
void register_net_cases(GradCheckRegistry& registry);

}  // namespace omniscan::net
