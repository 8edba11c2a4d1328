#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "omniscan/numerics/autograd.hpp"

// Differentiable operators. Image tensors are (B, C, H, W). Binary elementwise
// ops accept equal shapes, a one-element scalar operand, or a (B, C, 1, 1)
// operand against (B, C, H, W); nothing else broadcasts.
namespace omniscan::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);

template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
template <typename T> Var<T> silu(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

/// y[..., o] = sum_i x[..., i] * weight[o, i] + bias[o]. Bias may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation. input (B, C, H, W), weight (O, C/groups, kh, kw), bias (O) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, Conv2dOptions opt = {});

/// 1x1 mixing over axis 1 for (B, C, L) or (B, C, H, W); weight is (O, C).
template <typename T> Var<T> pointwise(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Normalizes over `axis` at every other coordinate: gamma * (x - mu) / sqrt(var + eps) + beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t axis, T eps = T(1e-5));

/// (B, C, H, W): statistics per sample over each run of C / groups channels and
/// all sites; gamma and beta per channel.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t groups, T eps = T(1e-5));

/// (B, C, H, W) -> (B, C)
template <typename T> Var<T> global_avg_pool(const Var<T>& x);
template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);
template <typename T> Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T>
std::vector<Var<T>> split(const Var<T>& x, const std::vector<std::size_t>& sizes, std::size_t axis);
/// Equal split along axis 1.
template <typename T> std::vector<Var<T>> split_channels(const Var<T>& x, std::size_t parts);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);
/// out[..., i, ...] = x[..., indices[i], ...] along `axis`.
template <typename T>
Var<T> index_select(const Var<T>& x, std::size_t axis, const std::vector<std::size_t>& indices);

/// Softmax over the last axis.
template <typename T> Var<T> softmax(const Var<T>& x);

enum class Reduction { Sum, Mean };

/// Binary cross-entropy on logits against constant targets in [0, 1].
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets, Reduction reduction = Reduction::Sum);

/// Counts multiply-accumulates issued by conv2d and linear forwards on this
/// thread while alive. Counters nest; only the innermost one is incremented.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_;
};

}  // namespace omniscan::ops
