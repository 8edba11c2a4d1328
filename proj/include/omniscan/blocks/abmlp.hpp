#pragma once

#include "omniscan/numerics/layers.hpp"

namespace omniscan::blocks {

inline constexpr std::size_t kReductionRatio = 4;

/// Channel attention: pooled features through three linear layers
/// (C -> C/r -> C/r -> C, ReLU, ReLU, Sigmoid) gate the input per channel.
template <typename T>
class Abmlp {
 public:
  Abmlp() = default;
  Abmlp(std::size_t channels, std::mt19937_64& rng, std::size_t ratio = kReductionRatio);

  Var<T> forward(const Var<T>& x) const;
  /// Gate values (B, C), each in (0, 1).
  Var<T> weights(const Var<T>& x) const;

  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t channels() const { return channels_; }

  Linear<T> fc1, fc2, fc3;

 private:
  std::size_t channels_ = 0;
};

/// Feature refinement: 1x1 compress C -> C/2 with SiLU, attention, 1x1 restore.
template <typename T>
class Frm {
 public:
  Frm() = default;
  /// Throws ShapeError for an odd channel count.
  Frm(std::size_t channels, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  Pointwise<T> compress, restore;
  Abmlp<T> attention;
};

}  // namespace omniscan::blocks
