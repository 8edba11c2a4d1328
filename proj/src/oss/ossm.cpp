#include "omniscan/oss/ossm.hpp"

#include <stdexcept>

#include "omniscan/numerics/ops.hpp"

namespace omniscan::oss {

namespace {

void check_map(const Shape& s, const DirectionMap& map, std::size_t spatial_rank) {
  const std::size_t H = map.height, W = map.width;
  const bool ok = spatial_rank == 2 ? (s.size() == 4 && s[2] == H && s[3] == W) : (s.size() == 3 && s[2] == H * W);
  if (!ok)
    throw ShapeError("direction map " + std::to_string(H) + "x" + std::to_string(W) + " (" +
                     direction_name(map.direction) + ") does not match " + shape_str(s));
}

}  // namespace

template <typename T>
Var<T> flatten(const Var<T>& x, const DirectionMap& map) {
  check_map(x.shape(), map, 2);
  const auto& s = x.shape();
  auto seq = ops::reshape(x, {s[0], s[1], s[2] * s[3]});
  return ops::index_select(seq, 2, map.order);
}

template <typename T>
Var<T> unflatten(const Var<T>& seq, const DirectionMap& map) {
  check_map(seq.shape(), map, 1);
  const auto& s = seq.shape();
  return ops::reshape(ops::index_select(seq, 2, map.inverse), {s[0], s[1], map.height, map.width});
}

template <typename T>
OssmBlock<T>::OssmBlock(std::size_t channels, std::size_t states, std::mt19937_64& rng) {
  for (auto& s : ssms_) s = ssm::SelectiveSsm<T>(channels, states, rng);
}

template <typename T>
Var<T> OssmBlock<T>::forward(const Var<T>& x, DirectionMask active) const {
  if (x.shape().size() != 4 || x.dim(1) != channels())
    throw ShapeError("OSSM expects (B, " + std::to_string(channels()) + ", H, W), got " + shape_str(x.shape()));
  const auto maps = direction_maps(x.dim(2), x.dim(3));
  Var<T> total;
  for (std::size_t i = 0; i < kDirections; ++i) {
    if (!active[i]) continue;
    const auto& map = (*maps)[i];
    auto y = unflatten(ssms_[i].forward(flatten(x, map), scan_options), map);
    total = total.defined() ? ops::add(total, y) : y;
  }
  if (!total.defined()) return constant(Tensor<T>(x.shape()));
  return total;
}

template <typename T>
void OssmBlock<T>::collect(const std::string& prefix, ParamList<T>& out) {
  for (std::size_t i = 0; i < kDirections; ++i) ssms_[i].collect(join_name(prefix, direction_name(kAllDirections[i])), out);
}

std::vector<bool> receptive_probe(const OssmBlock<double>& block, std::size_t H, std::size_t W, std::size_t r,
                                  std::size_t c, DirectionMask active) {
  if (r >= H || c >= W)
    throw std::out_of_range("probe site (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                            std::to_string(H) + "x" + std::to_string(W));
  NoGradGuard guard;
  const std::size_t C = block.channels();
  std::mt19937_64 rng(H * 1000 + W);
  Tensor<double> base({1, C, H, W});
  std::normal_distribution<double> normal;
  for (auto& v : base.data()) v = normal(rng);
  Tensor<double> moved = base;
  for (std::size_t ch = 0; ch < C; ++ch) moved.at({0, ch, r, c}) += 1.0;
  const auto y0 = block.forward(constant(base), active).value();
  const auto y1 = block.forward(constant(moved), active).value();
  std::vector<bool> mask(H * W, false);
  for (std::size_t ch = 0; ch < C; ++ch)
    for (std::size_t site = 0; site < H * W; ++site)
      if (y0[ch * H * W + site] != y1[ch * H * W + site]) mask[site] = true;
  return mask;
}

template Var<float> flatten<float>(const Var<float>&, const DirectionMap&);
template Var<double> flatten<double>(const Var<double>&, const DirectionMap&);
template Var<float> unflatten<float>(const Var<float>&, const DirectionMap&);
template Var<double> unflatten<double>(const Var<double>&, const DirectionMap&);
template class OssmBlock<float>;
template class OssmBlock<double>;

}  // namespace omniscan::oss
