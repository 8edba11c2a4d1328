#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "omniscan/numerics/autograd.hpp"

namespace omniscan {

/// One differentiable function under test plus the inputs it is probed at.
struct GradCase {
  std::function<Var<double>(const std::vector<Var<double>>&)> fn;
  std::vector<std::pair<std::string, Tensor<double>>> inputs;
};

struct GradCheckReport {
  std::string op;
  std::vector<std::pair<std::string, double>> per_input;  // max relative error per input
  double max_rel_err = 0.0;
  std::size_t probes = 0;
};

/// Central differences against reverse mode on loss = sum(f(x) * w), w ~ N(0, 1).
/// The step is the realized (x + h) - (x - h) so pure data movement is exact.
/// Relative error is |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport check_gradients(const std::string& name, const GradCase& c, std::uint64_t seed, double h = 1e-4);

double relative_error(double analytic, double numeric);

class GradCheckRegistry {
 public:
  // Shape argument is op-specific; an empty shape selects the op's default.
  using Factory = std::function<GradCase(const Shape&, std::mt19937_64&)>;

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const { return factories_.count(name) != 0; }
  std::vector<std::string> names() const;

  /// Throws std::invalid_argument for an unknown op name.
  GradCheckReport run(const std::string& name, const Shape& shape, std::uint64_t seed, double h = 1e-4) const;

 private:
  std::map<std::string, Factory> factories_;
};

/// Registers every operator in omniscan::ops.
void register_numerics_cases(GradCheckRegistry& registry);

Tensor<double> random_normal(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);
Tensor<double> random_uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi);

}  // namespace omniscan
