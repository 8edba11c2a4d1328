#pragma once

#include <random>

#include "omniscan/numerics/gradcheck.hpp"
#include "omniscan/numerics/module.hpp"
#include "omniscan/ssm/scan.hpp"

namespace omniscan::ssm {

struct ScanOptions {
  std::size_t chunk = 0;  // 0 selects scan_vectorized
  std::size_t lanes = 1;
};

/// Differentiable scan. Shapes as in ScanInputs; gradients from scan_backward.
template <typename T>
Var<T> selective_scan(const Var<T>& x, const Var<T>& delta, const Var<T>& a, const Var<T>& b, const Var<T>& c,
                      const Var<T>& d_skip, ScanOptions opt = {});

/// One selective SSM over (B, D, L) sequences. A = -exp(a_log); delta, B_k and C_k
/// are projections of x_k, delta through softplus.
template <typename T>
class SelectiveSsm {
 public:
  SelectiveSsm() = default;
  SelectiveSsm(std::size_t channels, std::size_t states, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x, ScanOptions opt = {}) const;

  /// Continuous A, (D, N); every entry negative.
  Tensor<T> continuous_a() const;

  void collect(const std::string& prefix, ParamList<T>& out);

  std::size_t channels() const { return channels_; }
  std::size_t states() const { return states_; }

  Var<T> a_log, w_delta, b_delta, w_b, w_c, d_skip;

 private:
  std::size_t channels_ = 0, states_ = 0;
};

/// Adds selective_scan (shape {B, D, L, N}), selective_scan_recompute and
/// selective_ssm (shape {B, D, L, N}).
void register_ssm_cases(GradCheckRegistry& registry);

}  // namespace omniscan::ssm
