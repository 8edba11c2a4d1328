#pragma once

#include "omniscan/blocks/abmlp.hpp"
#include "omniscan/numerics/gradcheck.hpp"
#include "omniscan/oss/ossm.hpp"

namespace omniscan::blocks {

/// Norm, then path 1 (pointwise + SiLU) times path 2 (pointwise, depthwise 3x3,
/// SiLU, OSSM, norm), pointwise mix, residual add. Channels and size preserved.
template <typename T>
class OssBranch {
 public:
  OssBranch() = default;
  OssBranch(std::size_t channels, std::size_t states, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ChannelNorm<T> norm_in, norm_out;
  Pointwise<T> gate, proj, mix;
  Conv2d<T> depthwise;
  oss::OssmBlock<T> ossm;
};

enum class VssVariant {
  Halving,    // VSS1: C -> C/2, no shortcut
  Preserving  // VSS2: C -> C, identity shortcut
};

/// Channel split into an FRM half and an OSS half, concat, 1x1 fusion.
template <typename T>
class Vss {
 public:
  Vss() = default;
  /// Throws ShapeError for an odd or too small channel count.
  Vss(std::size_t channels, VssVariant variant, std::size_t states, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  std::size_t in_channels() const { return channels_; }
  std::size_t out_channels() const { return variant_ == VssVariant::Preserving ? channels_ : channels_ / 2; }
  VssVariant variant() const { return variant_; }

  Frm<T> frm;
  OssBranch<T> oss;
  Pointwise<T> fuse;

 private:
  std::size_t channels_ = 0;
  VssVariant variant_ = VssVariant::Preserving;
};

/// Adds abmlp, frm, oss_branch, vss1 and vss2 (shape {B, C, H, W}).
void register_block_cases(GradCheckRegistry& registry);

/// Gradient case over a module's input and every parameter it collects.
template <typename M>
GradCase module_case(std::shared_ptr<M> module, Tensor<double> input) {
  auto params = std::make_shared<ParamList<double>>();
  module->collect("", *params);
  GradCase c;
  c.inputs.emplace_back("x", std::move(input));
  for (const auto& p : *params) c.inputs.emplace_back(p.name, p.var->value());
  c.fn = [module, params](const std::vector<Var<double>>& in) {
    for (std::size_t i = 0; i < params->size(); ++i) *(*params)[i].var = in[i + 1];
    return module->forward(in[0]);
  };
  return c;
}

}  // namespace omniscan::blocks
