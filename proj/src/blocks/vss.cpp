#include "omniscan/blocks/vss.hpp"

namespace omniscan::blocks {

template <typename T>
OssBranch<T>::OssBranch(std::size_t channels, std::size_t states, std::mt19937_64& rng)
    : norm_in(channels),
      norm_out(channels),
      gate(channels, channels, rng),
      proj(channels, channels, rng),
      mix(channels, channels, rng),
      depthwise(channels, channels, 3, rng, {1, 1, channels}),
      ossm(channels, states, rng) {}

template <typename T>
Var<T> OssBranch<T>::forward(const Var<T>& x) const {
  auto n = norm_in.forward(x);
  auto p1 = ops::silu(gate.forward(n));
  auto p2 = ops::silu(depthwise.forward(proj.forward(n)));
  p2 = norm_out.forward(ossm.forward(p2));
  return ops::add(mix.forward(ops::mul(p1, p2)), x);
}

template <typename T>
void OssBranch<T>::collect(const std::string& prefix, ParamList<T>& out) {
  norm_in.collect(join_name(prefix, "norm_in"), out);
  gate.collect(join_name(prefix, "gate"), out);
  proj.collect(join_name(prefix, "proj"), out);
  depthwise.collect(join_name(prefix, "depthwise"), out);
  ossm.collect(join_name(prefix, "ossm"), out);
  norm_out.collect(join_name(prefix, "norm_out"), out);
  mix.collect(join_name(prefix, "mix"), out);
}

template <typename T>
Vss<T>::Vss(std::size_t channels, VssVariant variant, std::size_t states, std::mt19937_64& rng)
    : channels_(channels), variant_(variant) {
  if (channels < 4 || channels % 4)
    throw ShapeError("VSS: channel count must be a positive multiple of 4, got " + std::to_string(channels));
  frm = Frm<T>(channels / 2, rng);
  oss = OssBranch<T>(channels / 2, states, rng);
  fuse = Pointwise<T>(channels, out_channels(), rng);
}

template <typename T>
Var<T> Vss<T>::forward(const Var<T>& x) const {
  if (x.shape().size() != 4 || x.dim(1) != channels_)
    throw ShapeError("VSS: expected (B, " + std::to_string(channels_) + ", H, W), got " + shape_str(x.shape()));
  auto halves = ops::split_channels(x, 2);
  auto y = fuse.forward(ops::concat<T>({frm.forward(halves[0]), oss.forward(halves[1])}, 1));
  if (variant_ == VssVariant::Preserving) y = ops::add(y, x);
  return y;
}

template <typename T>
void Vss<T>::collect(const std::string& prefix, ParamList<T>& out) {
  frm.collect(join_name(prefix, "frm"), out);
  oss.collect(join_name(prefix, "oss"), out);
  fuse.collect(join_name(prefix, "fuse"), out);
}

namespace {

Shape shape_or(const Shape& s, Shape d) { return s.empty() ? d : s; }

}  // namespace

void register_block_cases(GradCheckRegistry& r) {
  r.add("abmlp", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = shape_or(s, {2, 8, 3, 3});
    return module_case(std::make_shared<Abmlp<double>>(sh[1], rng), random_normal(sh, rng));
  });
  r.add("frm", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = shape_or(s, {2, 8, 3, 3});
    return module_case(std::make_shared<Frm<double>>(sh[1], rng), random_normal(sh, rng));
  });
  r.add("oss_branch", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = shape_or(s, {1, 4, 3, 3});
    return module_case(std::make_shared<OssBranch<double>>(sh[1], 2, rng), random_normal(sh, rng));
  });
  r.add("vss1", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = shape_or(s, {1, 8, 3, 3});
    return module_case(std::make_shared<Vss<double>>(sh[1], VssVariant::Halving, 2, rng), random_normal(sh, rng));
  });
  r.add("vss2", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = shape_or(s, {1, 8, 3, 3});
    return module_case(std::make_shared<Vss<double>>(sh[1], VssVariant::Preserving, 2, rng), random_normal(sh, rng));
  });
}

template class OssBranch<float>;
template class OssBranch<double>;
template class Vss<float>;
template class Vss<double>;

}  // namespace omniscan::blocks
