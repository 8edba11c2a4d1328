#pragma once

#include <cstddef>
#include <vector>

#include "omniscan/numerics/tensor.hpp"

// Diagonal selective state-space recurrence, per channel d and state n:
//   A_bar = exp(delta * a),  B_bar = ((exp(delta * a) - 1) / a) * b
//   h_k = A_bar h_{k-1} + B_bar x_k,   y_k = sum_n c_n h_k[n] + d_skip x_k,  h_{-1} = 0
namespace omniscan::ssm {

template <typename T>
struct Discretized {
  T a_bar;
  T b_bar;
};

/// |delta * a| below this uses the series for B_bar.
inline constexpr double kSeriesCutoff = 1e-6;

/// Zero-order-hold discretization of one (a, b) pair. Throws NumericError for delta <= 0.
template <typename T>
Discretized<T> discretize(T a, T b, T delta);

/// Per-timestep inputs of a selective scan.
template <typename T>
struct ScanInputs {
  Tensor<T> x;       // (B, D, L)
  Tensor<T> delta;   // (B, D, L), strictly positive
  Tensor<T> a;       // (D, N), continuous diagonal state matrix, negative
  Tensor<T> b;       // (B, N, L)
  Tensor<T> c;       // (B, N, L)
  Tensor<T> d_skip;  // (D)

  std::size_t batch() const { return x.dim(0); }
  std::size_t channels() const { return x.dim(1); }
  std::size_t length() const { return x.dim(2); }
  std::size_t states() const { return a.dim(1); }
};

/// Validates shapes; throws ShapeError naming the offending tensor/axis.
template <typename T>
void validate(const ScanInputs<T>& in);

/// Hidden states kept from a forward pass for the backward pass. With interval 1
/// every h_k is stored; otherwise h_{j*interval-1} (the carry into segment j).
/// A nonzero requested_interval overrides storage_interval(L).
template <typename T>
struct ScanSaved {
  std::size_t requested_interval = 0;
  std::size_t interval = 0;
  std::size_t batch = 0, channels = 0, length = 0, states = 0;
  std::vector<T> h;

  bool matches(const ScanInputs<T>& in) const;
  std::size_t segments() const { return interval ? (length + interval - 1) / interval : 0; }
};

/// Full storage up to this length, checkpointed recomputation above it.
inline constexpr std::size_t kFullStorageMaxLength = 4096;
inline constexpr std::size_t kRecomputeInterval = 64;

std::size_t storage_interval(std::size_t length);

/// Reference kernel: one left-to-right pass per channel. Bitwise deterministic.
template <typename T>
Tensor<T> scan_sequential(const ScanInputs<T>& in, ScanSaved<T>* saved = nullptr);

/// Sequential recurrence over time, vectorized across channels, with the
/// discretization evaluated in blocks. Same math as scan_sequential up to
/// exp/expm1 rounding.
template <typename T>
Tensor<T> scan_vectorized(const ScanInputs<T>& in, ScanSaved<T>* saved = nullptr);

/// Chunked kernel: local scans per chunk, a fixed left fold of chunk summaries with
/// (a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2), then a carry-in pass. Results do
/// not depend on `lanes`. chunk >= L runs the sequential kernel.
template <typename T>
Tensor<T> scan_parallel(const ScanInputs<T>& in, std::size_t chunk, std::size_t lanes = 0,
                        ScanSaved<T>* saved = nullptr);

template <typename T>
struct ScanGrads {
  Tensor<T> x, delta, a, b, c, d_skip;
};

/// Reverse recurrence: g_{k-1} += A_bar_k g_k. Throws std::logic_error when the
/// saved state is missing or does not belong to these inputs.
template <typename T>
ScanGrads<T> scan_backward(const ScanInputs<T>& in, const Tensor<T>& grad_y, const ScanSaved<T>& saved);

/// A scan element (multiplier, offset) representing h -> mult * h + offset.
template <typename T>
struct ScanElement {
  T mult;
  T offset;
};

/// later o earlier: apply `earlier` first, then `later`.
template <typename T>
ScanElement<T> combine(const ScanElement<T>& later, const ScanElement<T>& earlier) {
  return {later.mult * earlier.mult, later.mult * earlier.offset + later.offset};
}

}  // namespace omniscan::ssm
