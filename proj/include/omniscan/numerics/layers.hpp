#pragma once

#include <numeric>
#include <random>
#include <string>

#include "omniscan/numerics/module.hpp"
#include "omniscan/numerics/ops.hpp"

namespace omniscan {

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng, ops::Conv2dOptions opt = {},
         bool bias = true)
      : opt_(opt) {
    if (opt.groups == 0 || in % opt.groups || out % opt.groups)
      throw ShapeError("Conv2d: channels " + std::to_string(in) + "->" + std::to_string(out) +
                       " not divisible by groups " + std::to_string(opt.groups));
    const std::size_t fan_in = in / opt.groups * kernel * kernel;
    weight = parameter(init_fan_in<T>({out, in / opt.groups, kernel, kernel}, fan_in, rng));
    if (bias) this->bias = parameter(init_fan_in<T>({out}, fan_in, rng));
  }

  Var<T> forward(const Var<T>& x) const { return ops::conv2d(x, weight, bias, opt_); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({join_name(prefix, "weight"), &weight});
    if (bias.defined()) out.push_back({join_name(prefix, "bias"), &bias});
  }

  std::size_t out_channels() const { return weight.dim(0); }
  const ops::Conv2dOptions& options() const { return opt_; }

  Var<T> weight, bias;

 private:
  ops::Conv2dOptions opt_;
};

/// 1x1 mixing over axis 1 of (B, C, L) or (B, C, H, W).
template <typename T>
class Pointwise {
 public:
  Pointwise() = default;
  Pointwise(std::size_t in, std::size_t out, std::mt19937_64& rng, bool bias = true) {
    weight = parameter(init_fan_in<T>({out, in}, in, rng));
    if (bias) this->bias = parameter(init_fan_in<T>({out}, in, rng));
  }

  Var<T> forward(const Var<T>& x) const { return ops::pointwise(x, weight, bias); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({join_name(prefix, "weight"), &weight});
    if (bias.defined()) out.push_back({join_name(prefix, "bias"), &bias});
  }

  Var<T> weight, bias;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(parameter(init_fan_in<T>({out, in}, in, rng))), bias(parameter(init_fan_in<T>({out}, in, rng))) {}

  Var<T> forward(const Var<T>& x) const { return ops::linear(x, weight, bias); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({join_name(prefix, "weight"), &weight});
    out.push_back({join_name(prefix, "bias"), &bias});
  }

  Var<T> weight, bias;
};

/// Layer norm over the channel axis at every site.
template <typename T>
class ChannelNorm {
 public:
  ChannelNorm() = default;
  explicit ChannelNorm(std::size_t channels) : gamma(ones_param<T>({channels})), beta(zeros_param<T>({channels})) {}

  Var<T> forward(const Var<T>& x) const { return ops::layer_norm(x, gamma, beta, 1); }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({join_name(prefix, "gamma"), &gamma});
    out.push_back({join_name(prefix, "beta"), &beta});
  }

  Var<T> gamma, beta;
};

/// Group norm over (B, C, H, W): groups = gcd(C, kMaxNormGroups).
inline constexpr std::size_t kMaxNormGroups = 8;

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  explicit GroupNorm(std::size_t channels)
      : gamma(ones_param<T>({channels})), beta(zeros_param<T>({channels})), groups_(std::gcd(channels, kMaxNormGroups)) {}

  Var<T> forward(const Var<T>& x) const { return ops::group_norm(x, gamma, beta, groups_); }
  std::size_t groups() const { return groups_; }

  void collect(const std::string& prefix, ParamList<T>& out) {
    out.push_back({join_name(prefix, "gamma"), &gamma});
    out.push_back({join_name(prefix, "beta"), &beta});
  }

  Var<T> gamma, beta;

 private:
  std::size_t groups_ = 1;
};

}  // namespace omniscan
