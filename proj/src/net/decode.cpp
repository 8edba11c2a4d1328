#include "omniscan/net/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace omniscan::net {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Box decode_box(const BoxCode& c, std::size_t gx, std::size_t gy, std::size_t stride) {
  const double s = static_cast<double>(stride);
  const double cx = (static_cast<double>(gx) + c.dx) * s, cy = (static_cast<double>(gy) + c.dy) * s;
  const double w = std::exp(c.tw) * s, h = std::exp(c.th) * s;
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

BoxCode encode_box(const Box& b, std::size_t gx, std::size_t gy, std::size_t stride) {
  if (!b.valid()) throw std::invalid_argument("encode_box: degenerate box");
  const double s = static_cast<double>(stride);
  return {b.cx() / s - static_cast<double>(gx), b.cy() / s - static_cast<double>(gy), std::log(b.width() / s),
          std::log(b.height() / s)};
}

Assignment assign_level(const Box& box, std::size_t input_width, std::size_t input_height) {
  if (!box.valid()) throw std::invalid_argument("assign_level: degenerate box");
  const double target = 0.5 * std::log(box.area());
  Assignment a;
  double best = 0;
  for (std::size_t l = 0; l < kStrides.size(); ++l) {
    const double d = std::abs(std::log(static_cast<double>(kStrides[l])) - target);
    if (l == 0 || d < best) best = d, a.level = l;
  }
  const std::size_t s = kStrides[a.level];
  const std::size_t gw = input_width / s, gh = input_height / s;
  auto cell = [](double v, std::size_t stride, std::size_t n) {
    const double c = std::floor(v / static_cast<double>(stride));
    return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(n - 1)));
  };
  a.gx = cell(box.cx(), s, gw);
  a.gy = cell(box.cy(), s, gh);
  return a;
}

std::vector<Detection> nms(std::vector<Detection> dets, double nms_iou) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept)
      if (k.class_id == d.class_id && metrics::iou(k.box, d.box) > nms_iou) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(d);
  }
  return kept;
}

template <typename T>
std::vector<LevelMaps<T>> level_maps(const std::vector<LevelOutput<T>>& outputs) {
  std::vector<LevelMaps<T>> out;
  for (const auto& o : outputs) out.push_back({o.cls.value(), o.box.value(), o.obj.value(), o.stride});
  return out;
}

template <typename T>
std::vector<std::vector<Detection>> decode(const std::vector<LevelMaps<T>>& levels, const DecodeOptions& opt) {
  if (!(opt.conf_threshold >= 0 && opt.conf_threshold <= 1))
    throw std::invalid_argument("decode: conf_threshold must lie in [0, 1]");
  if (!(opt.nms_iou >= 0 && opt.nms_iou <= 1)) throw std::invalid_argument("decode: nms_iou must lie in [0, 1]");
  if (levels.empty()) return {};
  const std::size_t B = levels[0].obj.dim(0);
  std::vector<std::vector<Detection>> result(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<Detection> cands;
    for (const auto& lv : levels) {
      const std::size_t K = lv.cls.dim(1), H = lv.obj.dim(2), W = lv.obj.dim(3), HW = H * W;
      if (lv.box.dim(1) != 4 || lv.cls.dim(2) != H || lv.box.dim(2) != H)
        throw ShapeError("decode: inconsistent level maps");
      const T* cls = lv.cls.raw() + b * K * HW;
      const T* box = lv.box.raw() + b * 4 * HW;
      const T* obj = lv.obj.raw() + b * HW;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t s = y * W + x;
          std::size_t best = 0;
          for (std::size_t k = 1; k < K; ++k)
            if (cls[k * HW + s] > cls[best * HW + s]) best = k;
          const double score = sigmoid(static_cast<double>(obj[s])) * sigmoid(static_cast<double>(cls[best * HW + s]));
          if (!(score >= opt.conf_threshold) || score <= 0) continue;
          const BoxCode code{static_cast<double>(box[s]), static_cast<double>(box[HW + s]),
                             static_cast<double>(box[2 * HW + s]), static_cast<double>(box[3 * HW + s])};
          Box bx = decode_box(code, x, y, lv.stride);
          if (opt.image_width > 0 && opt.image_height > 0) bx = metrics::clip(bx, opt.image_width, opt.image_height);
          if (!bx.valid() || !std::isfinite(bx.area())) continue;
          cands.push_back({best, score, bx});
        }
    }
    auto kept = nms(std::move(cands), opt.nms_iou);
    if (kept.size() > opt.max_detections) kept.resize(opt.max_detections);
    result[b] = std::move(kept);
  }
  return result;
}

template std::vector<LevelMaps<float>> level_maps(const std::vector<LevelOutput<float>>&);
template std::vector<LevelMaps<double>> level_maps(const std::vector<LevelOutput<double>>&);
template std::vector<std::vector<Detection>> decode(const std::vector<LevelMaps<float>>&, const DecodeOptions&);
template std::vector<std::vector<Detection>> decode(const std::vector<LevelMaps<double>>&, const DecodeOptions&);

}  // namespace omniscan::net
