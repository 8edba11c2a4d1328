#include "omniscan/net/model.hpp"

#include <cmath>

namespace omniscan::net {

template <typename T>
ConvUnit<T>::ConvUnit(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::mt19937_64& rng)
    : conv(in, out, kernel, rng, {stride, kernel / 2, 1}, false), norm(out) {}

template <typename T>
Var<T> ConvUnit<T>::forward(const Var<T>& x) const {
  return ops::silu(norm.forward(conv.forward(x)));
}

template <typename T>
void ConvUnit<T>::collect(const std::string& prefix, ParamList<T>& out) {
  conv.collect(join_name(prefix, "conv"), out);
  norm.collect(join_name(prefix, "norm"), out);
}

template <typename T>
Bottleneck<T>::Bottleneck(std::size_t channels, std::mt19937_64& rng)
    : reduce(channels, channels, 1, 1, rng), expand(channels, channels, 3, 1, rng) {}

template <typename T>
Var<T> Bottleneck<T>::forward(const Var<T>& x) const {
  return ops::add(expand.forward(reduce.forward(x)), x);
}

template <typename T>
void Bottleneck<T>::collect(const std::string& prefix, ParamList<T>& out) {
  reduce.collect(join_name(prefix, "reduce"), out);
  expand.collect(join_name(prefix, "expand"), out);
}

template <typename T>
CspBlock<T>::CspBlock(std::size_t channels, std::size_t depth, std::mt19937_64& rng)
    : main(channels, channels / 2, 1, 1, rng),
      shortcut(channels, channels / 2, 1, 1, rng),
      merge(channels / 2 * 2, channels, 1, 1, rng) {
  for (std::size_t i = 0; i < depth; ++i) blocks.emplace_back(channels / 2, rng);
}

template <typename T>
Var<T> CspBlock<T>::forward(const Var<T>& x) const {
  auto a = main.forward(x);
  for (const auto& b : blocks) a = b.forward(a);
  return merge.forward(ops::concat<T>({a, shortcut.forward(x)}, 1));
}

template <typename T>
void CspBlock<T>::collect(const std::string& prefix, ParamList<T>& out) {
  main.collect(join_name(prefix, "main"), out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(join_name(prefix, "m" + std::to_string(i)), out);
  shortcut.collect(join_name(prefix, "shortcut"), out);
  merge.collect(join_name(prefix, "merge"), out);
}

template <typename T>
Sppf<T>::Sppf(std::size_t channels, std::mt19937_64& rng)
    : reduce(channels, channels / 2, 1, 1, rng), merge(channels / 2 * 4, channels, 1, 1, rng) {}

template <typename T>
Var<T> Sppf<T>::forward(const Var<T>& x) const {
  auto a = reduce.forward(x);
  auto p1 = ops::max_pool2d(a, 5, 1, 2);
  auto p2 = ops::max_pool2d(p1, 5, 1, 2);
  auto p3 = ops::max_pool2d(p2, 5, 1, 2);
  return merge.forward(ops::concat<T>({a, p1, p2, p3}, 1));
}

template <typename T>
void Sppf<T>::collect(const std::string& prefix, ParamList<T>& out) {
  reduce.collect(join_name(prefix, "reduce"), out);
  merge.collect(join_name(prefix, "merge"), out);
}

template <typename T>
Backbone<T>::Backbone(const NetConfig& config, std::mt19937_64& rng) {
  const auto w = config.widths();
  stem = ConvUnit<T>(3, w[0], 3, 2, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    down[i] = ConvUnit<T>(w[i], w[i + 1], 3, 2, rng);
    csp[i] = CspBlock<T>(w[i + 1], config.csp_depth, rng);
  }
  sppf = Sppf<T>(w[4], rng);
}

template <typename T>
Pyramid<T> Backbone<T>::forward(const Var<T>& image) const {
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != 3)
    throw ShapeError("backbone: expected (B, 3, H, W), got " + shape_str(s));
  if (s[2] == 0 || s[2] % 32 || s[3] == 0 || s[3] % 32)
    throw ShapeError("backbone: H and W must be positive multiples of 32, got " + shape_str(s));
  auto x = stem.forward(image);
  Pyramid<T> out;
  for (std::size_t i = 0; i < 4; ++i) {
    x = csp[i].forward(down[i].forward(x));
    if (i == 3) x = sppf.forward(x);
    if (i == 1) out.p3 = x;
    if (i == 2) out.p4 = x;
  }
  out.p5 = x;
  return out;
}

template <typename T>
void Backbone<T>::collect(const std::string& prefix, ParamList<T>& out) {
  stem.collect(join_name(prefix, "stem"), out);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto stage = join_name(prefix, "stage" + std::to_string(i + 1));
    down[i].collect(join_name(stage, "down"), out);
    csp[i].collect(join_name(stage, "csp"), out);
  }
  sppf.collect(join_name(prefix, "sppf"), out);
}

template <typename T>
FusionNode<T>::FusionNode(std::size_t in, std::size_t out, bool vss, bool identity_fallback, std::size_t states,
                          std::mt19937_64& rng) {
  if (vss) {
    const auto variant = out == in ? blocks::VssVariant::Preserving : blocks::VssVariant::Halving;
    if (variant == blocks::VssVariant::Halving && out * 2 != in)
      throw ShapeError("fusion node: VSS maps C to C or C/2, asked " + std::to_string(in) + "->" + std::to_string(out));
    vss_ = std::make_shared<blocks::Vss<T>>(in, variant, states, rng);
  } else if (!(identity_fallback && in == out)) {
    conv_ = std::make_shared<ConvUnit<T>>(in, out, 1, 1, rng);
  }
}

template <typename T>
Var<T> FusionNode<T>::forward(const Var<T>& x) const {
  if (vss_) return vss_->forward(x);
  if (conv_) return conv_->forward(x);
  return x;
}

template <typename T>
void FusionNode<T>::set_scan_chunk(std::size_t chunk) {
  if (vss_) vss_->oss.ossm.scan_options.chunk = chunk;
}

template <typename T>
void FusionNode<T>::collect(const std::string& prefix, ParamList<T>& out) {
  if (vss_) vss_->collect(join_name(prefix, "vss"), out);
  if (conv_) conv_->collect(join_name(prefix, "conv"), out);
}

template <typename T>
Fpn<T>::Fpn(const NetConfig& config, std::mt19937_64& rng) {
  const auto w = config.widths();
  const std::size_t c3 = w[2], c4 = w[3], c5 = w[4], n = config.states;
  channels_ = {c3, c4, c5};
  lateral3 = FusionNode<T>(c3, c3, config.vss_p3, true, n, rng);
  lateral4 = FusionNode<T>(c4, c4, config.vss_p4, true, n, rng);
  lateral5 = FusionNode<T>(c5, c5, config.vss_p5, true, n, rng);
  reduce5 = ConvUnit<T>(c5, c4, 1, 1, rng);
  fuse4 = FusionNode<T>(2 * c4, c4, config.vss_p4, false, n, rng);
  reduce4 = ConvUnit<T>(c4, c3, 1, 1, rng);
  fuse3 = FusionNode<T>(2 * c3, c3, config.vss_p3, false, n, rng);
  down3 = ConvUnit<T>(c3, c3, 3, 2, rng);
  out4 = FusionNode<T>(2 * c3, c4, config.vss_p4, false, n, rng);
  down4 = ConvUnit<T>(c4, c4, 3, 2, rng);
  out5 = FusionNode<T>(2 * c4, c5, config.vss_p5, false, n, rng);
}

template <typename T>
Pyramid<T> Fpn<T>::forward(const Pyramid<T>& in) const {
  auto check = [](const Var<T>& v, std::size_t c, const char* name) {
    if (!v.defined() || v.shape().size() != 4 || v.dim(1) != c)
      throw ShapeError(std::string("fpn: ") + name + " must have " + std::to_string(c) + " channels");
  };
  check(in.p3, channels_[0], "p3");
  check(in.p4, channels_[1], "p4");
  check(in.p5, channels_[2], "p5");
  const auto& s3 = in.p3.shape();
  const auto& s4 = in.p4.shape();
  const auto& s5 = in.p5.shape();
  if (s4[2] * 2 != s3[2] || s4[3] * 2 != s3[3] || s5[2] * 2 != s4[2] || s5[3] * 2 != s4[3] || s3[0] != s4[0] ||
      s4[0] != s5[0])
    throw ShapeError("fpn: pyramid levels must halve in H and W: " + shape_str(s3) + ", " + shape_str(s4) + ", " +
                     shape_str(s5));

  auto lat5 = reduce5.forward(lateral5.forward(in.p5));
  auto f4 = fuse4.forward(ops::concat<T>({ops::upsample_nearest(lat5, 2), lateral4.forward(in.p4)}, 1));
  auto lat4 = reduce4.forward(f4);
  Pyramid<T> out;
  out.p3 = fuse3.forward(ops::concat<T>({ops::upsample_nearest(lat4, 2), lateral3.forward(in.p3)}, 1));
  out.p4 = out4.forward(ops::concat<T>({down3.forward(out.p3), lat4}, 1));
  out.p5 = out5.forward(ops::concat<T>({down4.forward(out.p4), lat5}, 1));
  return out;
}

template <typename T>
void Fpn<T>::collect(const std::string& prefix, ParamList<T>& out) {
  lateral5.collect(join_name(prefix, "lateral5"), out);
  reduce5.collect(join_name(prefix, "reduce5"), out);
  lateral4.collect(join_name(prefix, "lateral4"), out);
  fuse4.collect(join_name(prefix, "fuse4"), out);
  reduce4.collect(join_name(prefix, "reduce4"), out);
  lateral3.collect(join_name(prefix, "lateral3"), out);
  fuse3.collect(join_name(prefix, "fuse3"), out);
  down3.collect(join_name(prefix, "down3"), out);
  out4.collect(join_name(prefix, "out4"), out);
  down4.collect(join_name(prefix, "down4"), out);
  out5.collect(join_name(prefix, "out5"), out);
}

template <typename T>
HeadLevel<T>::HeadLevel(std::size_t in, std::size_t hidden, std::size_t classes, std::mt19937_64& rng)
    : cls_stem(in, hidden, 3, 1, rng),
      reg_stem(in, hidden, 3, 1, rng),
      cls_pred(hidden, classes, 1, rng),
      box_pred(hidden, 4, 1, rng),
      obj_pred(hidden, 1, 1, rng) {
  const T prior = static_cast<T>(-std::log((1.0 - kPriorProbability) / kPriorProbability));
  cls_pred.bias.mutable_value().fill(prior);
  obj_pred.bias.mutable_value().fill(prior);
  auto& b = box_pred.bias.mutable_value();
  b[0] = b[1] = T(0.5);
  b[2] = b[3] = T(0);
}

template <typename T>
LevelOutput<T> HeadLevel<T>::forward(const Var<T>& x) const {
  LevelOutput<T> out;
  out.cls = cls_pred.forward(cls_stem.forward(x));
  auto r = reg_stem.forward(x);
  out.box = box_pred.forward(r);
  out.obj = obj_pred.forward(r);
  return out;
}

template <typename T>
void HeadLevel<T>::collect(const std::string& prefix, ParamList<T>& out) {
  cls_stem.collect(join_name(prefix, "cls_stem"), out);
  cls_pred.collect(join_name(prefix, "cls_pred"), out);
  reg_stem.collect(join_name(prefix, "reg_stem"), out);
  box_pred.collect(join_name(prefix, "box_pred"), out);
  obj_pred.collect(join_name(prefix, "obj_pred"), out);
}

template <typename T>
Detector<T>::Detector(const NetConfig& config) : config_(config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  backbone = Backbone<T>(config, rng);
  fpn = Fpn<T>(config, rng);
  const auto w = config.widths();
  for (std::size_t i = 0; i < 3; ++i) head[i] = HeadLevel<T>(w[i + 2], config.hidden(), config.class_count, rng);
  for (auto* node : {&fpn.lateral3, &fpn.lateral4, &fpn.lateral5, &fpn.fuse4, &fpn.fuse3, &fpn.out4, &fpn.out5})
    node->set_scan_chunk(config.scan_chunk);
}

template <typename T>
std::vector<LevelOutput<T>> Detector<T>::forward(const Var<T>& images) const {
  const auto feats = fpn.forward(backbone.forward(images));
  std::vector<LevelOutput<T>> out;
  const Var<T>* levels[3] = {&feats.p3, &feats.p4, &feats.p5};
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back(head[i].forward(*levels[i]));
    out.back().stride = kStrides[i];
  }
  return out;
}

template <typename T>
void Detector<T>::collect(ParamList<T>& out) {
  backbone.collect("backbone", out);
  fpn.collect("fpn", out);
  for (std::size_t i = 0; i < 3; ++i) head[i].collect("head.p" + std::to_string(i + 3), out);
}

template <typename T>
ParamList<T> Detector<T>::parameters() {
  ParamList<T> out;
  collect(out);
  return out;
}

#define OMNISCAN_NET_INSTANTIATE(T) \
  template class ConvUnit<T>;       \
  template class Bottleneck<T>;     \
  template class CspBlock<T>;       \
  template class Sppf<T>;           \
  template class Backbone<T>;       \
  template class FusionNode<T>;     \
  template class Fpn<T>;            \
  template class HeadLevel<T>;      \
  template class Detector<T>;

OMNISCAN_NET_INSTANTIATE(float)
OMNISCAN_NET_INSTANTIATE(double)

}  // namespace omniscan::net
