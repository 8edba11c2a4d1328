#include "omniscan/net/loss.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "omniscan/numerics/ops.hpp"

namespace omniscan::net {

std::vector<Positive> assign_targets(const std::vector<std::vector<GroundTruth>>& truths, std::size_t input_width,
                                     std::size_t input_height) {
  std::vector<Positive> out;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> taken;
  for (std::size_t b = 0; b < truths.size(); ++b)
    for (const auto& g : truths[b]) {
      const auto a = assign_level(g.box, input_width, input_height);
      if (!taken.insert({b, a.level, a.gy, a.gx}).second) continue;
      out.push_back({b, a.level, a.gx, a.gy, g.class_id, g.box});
    }
  return out;
}

namespace {

struct IouTerms {
  double iou, d_dx, d_dy, d_tw, d_th;  // derivatives of IoU
};

IouTerms iou_with_grad(const double* raw, const Positive& p) {
  const double s = static_cast<double>(kStrides[p.level]);
  const double cx = (static_cast<double>(p.gx) + raw[0]) * s, cy = (static_cast<double>(p.gy) + raw[1]) * s;
  const double w = std::exp(raw[2]) * s, h = std::exp(raw[3]) * s;
  const double x0 = cx - w / 2, x1 = cx + w / 2, y0 = cy - h / 2, y1 = cy + h / 2;
  const Box& g = p.target;
  const double iw = std::min(x1, g.x1) - std::max(x0, g.x0);
  const double ih = std::min(y1, g.y1) - std::max(y0, g.y0);
  const double area_p = w * h;
  if (iw <= 0 || ih <= 0) return {0, 0, 0, 0, 0};
  const double inter = iw * ih;
  const double uni = area_p + g.area() - inter;
  const double iou = inter / uni;
  // IoU = I / (Ap + Ag - I)
  const double d_inter = (uni + inter) / (uni * uni);
  const double d_area = -inter / (uni * uni);
  const double di_x0 = x0 > g.x0 ? -ih : 0.0, di_x1 = x1 < g.x1 ? ih : 0.0;
  const double di_y0 = y0 > g.y0 ? -iw : 0.0, di_y1 = y1 < g.y1 ? iw : 0.0;
  const double g_x0 = d_inter * di_x0, g_x1 = d_inter * di_x1;
  const double g_y0 = d_inter * di_y0, g_y1 = d_inter * di_y1;
  const double g_cx = g_x0 + g_x1, g_cy = g_y0 + g_y1;
  const double g_w = 0.5 * (g_x1 - g_x0) + d_area * h;
  const double g_h = 0.5 * (g_y1 - g_y0) + d_area * w;
  return {iou, g_cx * s, g_cy * s, g_w * w, g_h * h};
}

}  // namespace

template <typename T>
Var<T> iou_loss(const Var<T>& raw, const std::vector<Positive>& positives) {
  const auto& s = raw.shape();
  if (s.size() != 2 || s[1] != 4 || s[0] != positives.size())
    throw ShapeError("iou_loss: raw must be (" + std::to_string(positives.size()) + ", 4), got " + shape_str(s));
  double total = 0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    double r[4];
    for (std::size_t k = 0; k < 4; ++k) r[k] = static_cast<double>(raw.value()[i * 4 + k]);
    total += 1.0 - iou_with_grad(r, positives[i]).iou;
  }
  return record<T>("iou_loss", Tensor<T>::scalar(static_cast<T>(total)), {raw}, [positives](Node<T>& n) {
    const auto& in = n.inputs[0]->value;
    Tensor<T> g(in.shape());
    const double up = static_cast<double>(n.grad[0]);
    for (std::size_t i = 0; i < positives.size(); ++i) {
      double r[4];
      for (std::size_t k = 0; k < 4; ++k) r[k] = static_cast<double>(in[i * 4 + k]);
      const auto t = iou_with_grad(r, positives[i]);
      g[i * 4 + 0] = static_cast<T>(-t.d_dx * up);
      g[i * 4 + 1] = static_cast<T>(-t.d_dy * up);
      g[i * 4 + 2] = static_cast<T>(-t.d_tw * up);
      g[i * 4 + 3] = static_cast<T>(-t.d_th * up);
    }
    accumulate(*n.inputs[0], g);
  });
}

namespace {

// (B, C, H, W) -> rows (B*H*W, C) picked at the given flat cell indices.
template <typename T>
Var<T> gather_cells(const Var<T>& map, const std::vector<std::size_t>& rows) {
  const auto& s = map.shape();
  auto flat = ops::reshape(ops::permute(map, {0, 2, 3, 1}), {s[0] * s[2] * s[3], s[1]});
  return ops::index_select(flat, 0, rows);
}

}  // namespace

template <typename T>
DetectionLoss<T> detection_loss(const std::vector<LevelOutput<T>>& outputs,
                                const std::vector<std::vector<GroundTruth>>& truths, const NetConfig& config) {
  if (outputs.size() != kStrides.size()) throw ShapeError("detection_loss: expected three levels");
  const std::size_t B = outputs[0].obj.dim(0);
  if (truths.size() != B) throw ShapeError("detection_loss: truths/batch size mismatch");
  const std::size_t in_h = outputs[0].obj.dim(2) * kStrides[0], in_w = outputs[0].obj.dim(3) * kStrides[0];
  const std::size_t K = outputs[0].cls.dim(1);
  for (const auto& img : truths)
    for (const auto& g : img)
      if (g.class_id >= K) throw std::invalid_argument("detection_loss: class id out of range");
  const auto positives = assign_targets(truths, in_w, in_h);

  Var<T> obj_loss, cls_loss, box_loss;
  std::vector<Var<T>> cls_rows, box_rows;
  std::vector<Positive> ordered;
  std::vector<T> onehot;
  for (std::size_t l = 0; l < outputs.size(); ++l) {
    const auto& o = outputs[l];
    const std::size_t H = o.obj.dim(2), W = o.obj.dim(3);
    Tensor<T> obj_target(o.obj.shape());
    std::vector<std::size_t> rows;
    for (const auto& p : positives) {
      if (p.level != l) continue;
      const std::size_t cell = (p.image * H + p.gy) * W + p.gx;
      obj_target[cell] = T(1);
      rows.push_back(cell);
      ordered.push_back(p);
      for (std::size_t k = 0; k < K; ++k) onehot.push_back(k == p.class_id ? T(1) : T(0));
    }
    auto term = ops::bce_with_logits(o.obj, obj_target);
    obj_loss = obj_loss.defined() ? ops::add(obj_loss, term) : term;
    if (!rows.empty()) {
      cls_rows.push_back(gather_cells(o.cls, rows));
      box_rows.push_back(gather_cells(o.box, rows));
    }
  }

  DetectionLoss<T> out;
  out.parts.positives = ordered.size();
  const T norm = T(1) / static_cast<T>(std::max<std::size_t>(1, ordered.size()));
  Var<T> total = ops::scale(obj_loss, static_cast<T>(config.obj_weight));
  out.parts.obj = static_cast<double>(obj_loss.value()[0]) * norm;
  if (!ordered.empty()) {
    auto cls_logits = cls_rows.size() == 1 ? cls_rows[0] : ops::concat(cls_rows, 0);
    auto box_raw = box_rows.size() == 1 ? box_rows[0] : ops::concat(box_rows, 0);
    cls_loss = ops::bce_with_logits(cls_logits, Tensor<T>({ordered.size(), K}, std::move(onehot)));
    box_loss = iou_loss(box_raw, ordered);
    total = ops::add(total, ops::scale(cls_loss, static_cast<T>(config.cls_weight)));
    total = ops::add(total, ops::scale(box_loss, static_cast<T>(config.iou_weight)));
    out.parts.cls = static_cast<double>(cls_loss.value()[0]) * norm;
    out.parts.iou = static_cast<double>(box_loss.value()[0]) * norm;
  }
  out.total = ops::scale(total, norm);
  out.parts.total = static_cast<double>(out.total.value()[0]);
  return out;
}

void register_net_cases(GradCheckRegistry& r) {
  r.add("iou_loss", [](const Shape& s, std::mt19937_64& rng) {
    const std::size_t P = s.empty() ? 6 : s[0];
    std::vector<Positive> pos;
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < P; ++i) {
      Positive p;
      p.level = i % 3;
      p.gx = 1 + i % 2;
      p.gy = 1;
      const double st = static_cast<double>(kStrides[p.level]);
      const double cx = (p.gx + 0.2 + 0.6 * u(rng)) * st, cy = (p.gy + 0.2 + 0.6 * u(rng)) * st;
      const double w = st * (0.8 + 1.5 * u(rng)), h = st * (0.8 + 1.5 * u(rng));
      p.target = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
      pos.push_back(p);
    }
    auto raw = random_uniform({P, 4}, rng, -0.3, 0.3);
    for (std::size_t i = 0; i < P; ++i) raw[i * 4] += 0.5, raw[i * 4 + 1] += 0.5;
    return GradCase{[pos](const std::vector<Var<double>>& in) { return iou_loss(in[0], pos); }, {{"raw", raw}}};
  });
  r.add("detection_loss", [](const Shape& s, std::mt19937_64& rng) {
    const std::size_t B = s.empty() ? 2 : s[0], K = 3, size = 64;
    NetConfig cfg;
    cfg.class_count = K;
    cfg.obj_weight = 1.0, cfg.cls_weight = 0.7, cfg.iou_weight = 1.3;
    std::vector<std::vector<GroundTruth>> truths(B);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t b = 0; b < B; ++b) {
      truths[b].push_back({b % K, {4.3, 6.1, 12.2 + 3 * u(rng), 13.7 + 3 * u(rng)}});
      truths[b].push_back({(b + 1) % K, {14.2, 9.5, 50.1 + 8 * u(rng), 47.3 + 8 * u(rng)}});
    }
    GradCase c;
    for (std::size_t l = 0; l < 3; ++l) {
      const std::size_t g = size / kStrides[l];
      c.inputs.emplace_back("cls" + std::to_string(l), random_normal({B, K, g, g}, rng));
      auto box = random_uniform({B, 4, g, g}, rng, -0.3, 0.3);
      for (std::size_t i = 0; i < 2 * B * g * g; ++i) box[i] += 0.5;
      c.inputs.emplace_back("box" + std::to_string(l), box);
      c.inputs.emplace_back("obj" + std::to_string(l), random_normal({B, 1, g, g}, rng));
    }
    c.fn = [truths, cfg](const std::vector<Var<double>>& in) {
      std::vector<LevelOutput<double>> outs(3);
      for (std::size_t l = 0; l < 3; ++l) outs[l] = {in[3 * l], in[3 * l + 1], in[3 * l + 2], kStrides[l]};
      return detection_loss(outs, truths, cfg).total;
    };
    return c;
  });
}

template Var<float> iou_loss(const Var<float>&, const std::vector<Positive>&);
template Var<double> iou_loss(const Var<double>&, const std::vector<Positive>&);
template DetectionLoss<float> detection_loss(const std::vector<LevelOutput<float>>&,
                                             const std::vector<std::vector<GroundTruth>>&, const NetConfig&);
template DetectionLoss<double> detection_loss(const std::vector<LevelOutput<double>>&,
                                              const std::vector<std::vector<GroundTruth>>&, const NetConfig&);

}  // namespace omniscan::net
