#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "omniscan/numerics/autograd.hpp"

namespace omniscan {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T>* var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
Tensor<T> init_uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

/// Uniform in +-1/sqrt(fan_in).
template <typename T>
Tensor<T> init_fan_in(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return init_uniform<T>(shape, rng, -bound, bound);
}

template <typename T>
Var<T> zeros_param(const Shape& shape) {
  return parameter(Tensor<T>(shape));
}

template <typename T>
Var<T> ones_param(const Shape& shape) {
  return parameter(Tensor<T>(shape, T(1)));
}

template <typename T>
std::size_t count_params(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var->value().size();
  return n;
}

}  // namespace omniscan
