#include "omniscan/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "omniscan/numerics/ops.hpp"

namespace omniscan {

Tensor<double> random_normal(const Shape& shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor<double> random_uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::string& name, const GradCase& c, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Var<double>> params;
  for (const auto& [label, t] : c.inputs) params.push_back(parameter(t));

  auto out = c.fn(params);
  const Tensor<double> weights = random_normal(out.shape(), rng);
  auto loss = ops::sum(ops::mul(out, constant(weights)));
  backward(loss);

  GradCheckReport report;
  report.op = name;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<double> analytic = params[p].grad();
    double worst = 0.0;
    Tensor<double>& x = params[p].mutable_value();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double x0 = x[j];
      const double xp = x0 + h, xm = x0 - h;
      Tensor<double> out_p, out_m;
      {
        NoGradGuard guard;
        x[j] = xp;
        out_p = c.fn(params).value();
        x[j] = xm;
        out_m = c.fn(params).value();
        x[j] = x0;
      }
      const double step = xp - xm;
      double numeric = 0.0;
      for (std::size_t i = 0; i < out_p.size(); ++i) numeric += weights[i] * ((out_p[i] - out_m[i]) / step);
      worst = std::max(worst, relative_error(analytic[j], numeric));
      ++report.probes;
    }
    report.per_input.emplace_back(c.inputs[p].first, worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

void GradCheckRegistry::add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }

std::vector<std::string> GradCheckRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : factories_) out.push_back(k);
  return out;
}

GradCheckReport GradCheckRegistry::run(const std::string& name, const Shape& shape, std::uint64_t seed,
                                       double h) const {
  auto it = factories_.find(name);
  if (it == factories_.end()) throw std::invalid_argument("unknown gradcheck op '" + name + "'");
  std::mt19937_64 rng(seed);
  return check_gradients(name, it->second(shape, rng), seed, h);
}

namespace {

using V = Var<double>;
using Vs = std::vector<V>;

Shape or_default(const Shape& s, Shape d) { return s.empty() ? d : s; }

GradCase unary_case(const Shape& s, std::mt19937_64& rng, V (*op)(const V&)) {
  return {[op](const Vs& in) { return op(in[0]); }, {{"x", random_normal(or_default(s, {2, 3, 4}), rng)}}};
}

}  // namespace

void register_numerics_cases(GradCheckRegistry& r) {
  r.add("add", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {2, 3, 4});
    return GradCase{[](const Vs& in) { return ops::add(in[0], in[1]); },
                    {{"a", random_normal(sh, rng)}, {"b", random_normal(sh, rng)}}};
  });
  r.add("sub", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {2, 3, 4});
    return GradCase{[](const Vs& in) { return ops::sub(in[0], in[1]); },
                    {{"a", random_normal(sh, rng)}, {"b", random_normal(sh, rng)}}};
  });
  r.add("mul", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {2, 3, 4});
    return GradCase{[](const Vs& in) { return ops::mul(in[0], in[1]); },
                    {{"a", random_normal(sh, rng)}, {"b", random_normal(sh, rng)}}};
  });
  r.add("mul_channel_broadcast", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {2, 3, 4, 5});
    return GradCase{[](const Vs& in) { return ops::mul(in[0], in[1]); },
                    {{"x", random_normal(sh, rng)}, {"gate", random_normal({sh[0], sh[1], 1, 1}, rng)}}};
  });
  r.add("add_scalar_broadcast", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {2, 3, 4});
    return GradCase{[](const Vs& in) { return ops::add(in[0], in[1]); },
                    {{"x", random_normal(sh, rng)}, {"s", random_normal({1}, rng)}}};
  });
  r.add("scale", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::scale(in[0], -1.75); },
                    {{"x", random_normal(or_default(s, {3, 4}), rng)}}};
  });
  r.add("exp", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::exp<double>); });
  r.add("softplus", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::softplus<double>); });
  r.add("silu", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::silu<double>); });
  r.add("relu", [](const Shape& s, std::mt19937_64& rng) {
    auto c = unary_case(s, rng, &ops::relu<double>);
    for (auto& v : c.inputs[0].second.data()) v += v < 0 ? -0.05 : 0.05;  // keep probes off the kink
    return c;
  });
  r.add("sigmoid", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::sigmoid<double>); });
  r.add("sum", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::sum<double>); });
  r.add("mean", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::mean<double>); });
  r.add("softmax", [](const Shape& s, std::mt19937_64& rng) { return unary_case(s, rng, &ops::softmax<double>); });
  r.add("linear", [](const Shape& s, std::mt19937_64& rng) {
    auto w = or_default(s, {4, 3});
    return GradCase{[](const Vs& in) { return ops::linear(in[0], in[1], in[2]); },
                    {{"x", random_normal({5, w[1]}, rng)}, {"weight", random_normal(w, rng)}, {"bias", random_normal({w[0]}, rng)}}};
  });
  r.add("conv2d", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 3, 6, 5});
    return GradCase{[](const Vs& in) { return ops::conv2d(in[0], in[1], in[2], {1, 1, 1}); },
                    {{"x", random_normal(x, rng)},
                     {"weight", random_normal({4, x[1], 3, 3}, rng)},
                     {"bias", random_normal({4}, rng)}}};
  });
  r.add("conv2d_strided", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 3, 8, 6});
    return GradCase{[](const Vs& in) { return ops::conv2d(in[0], in[1], in[2], {2, 1, 1}); },
                    {{"x", random_normal(x, rng)},
                     {"weight", random_normal({4, x[1], 3, 3}, rng)},
                     {"bias", random_normal({4}, rng)}}};
  });
  r.add("conv2d_grouped", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {1, 4, 5, 5});
    return GradCase{[](const Vs& in) { return ops::conv2d(in[0], in[1], V{}, {1, 1, 2}); },
                    {{"x", random_normal(x, rng)}, {"weight", random_normal({6, x[1] / 2, 3, 3}, rng)}}};
  });
  r.add("depthwise_conv2d", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 4, 5, 6});
    return GradCase{[c = x[1]](const Vs& in) { return ops::conv2d(in[0], in[1], in[2], {1, 1, c}); },
                    {{"x", random_normal(x, rng)},
                     {"weight", random_normal({x[1], 1, 3, 3}, rng)},
                     {"bias", random_normal({x[1]}, rng)}}};
  });
  r.add("pointwise", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 3, 7});
    return GradCase{[](const Vs& in) { return ops::pointwise(in[0], in[1], in[2]); },
                    {{"x", random_normal(x, rng)}, {"weight", random_normal({5, x[1]}, rng)}, {"bias", random_normal({5}, rng)}}};
  });
  r.add("layer_norm", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {8});
    const std::size_t axis = x.size() >= 2 ? 1 : 0;
    return GradCase{[axis](const Vs& in) { return ops::layer_norm(in[0], in[1], in[2], axis, 1e-5); },
                    {{"x", random_normal(x, rng)},
                     {"gamma", random_normal({x[axis]}, rng)},
                     {"beta", random_normal({x[axis]}, rng)}}};
  });
  r.add("group_norm", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 6, 3, 4});
    return GradCase{[](const Vs& in) { return ops::group_norm(in[0], in[1], in[2], 3, 1e-5); },
                    {{"x", random_normal(x, rng)},
                     {"gamma", random_normal({x[1]}, rng)},
                     {"beta", random_normal({x[1]}, rng)}}};
  });
  r.add("global_avg_pool", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::global_avg_pool(in[0]); },
                    {{"x", random_normal(or_default(s, {2, 3, 4, 5}), rng)}}};
  });
  r.add("max_pool2d", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::max_pool2d(in[0], 3, 1, 1); },
                    {{"x", random_normal(or_default(s, {1, 2, 5, 5}), rng)}}};
  });
  r.add("upsample_nearest", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::upsample_nearest(in[0], 2); },
                    {{"x", random_normal(or_default(s, {1, 2, 3, 4}), rng)}}};
  });
  r.add("concat", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 3, 4, 4});
    Shape y = x;
    y[1] += 2;
    return GradCase{[](const Vs& in) { return ops::concat(Vs{in[0], in[1]}, 1); },
                    {{"a", random_normal(x, rng)}, {"b", random_normal(y, rng)}}};
  });
  r.add("split_channels", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) {
                      auto parts = ops::split_channels(in[0], 2);
                      return ops::sub(ops::scale(parts[0], 2.0), parts[1]);
                    },
                    {{"x", random_normal(or_default(s, {2, 4, 3, 3}), rng)}}};
  });
  r.add("reshape", [](const Shape& s, std::mt19937_64& rng) {
    auto x = or_default(s, {2, 3, 4});
    return GradCase{[n = shape_numel(x)](const Vs& in) { return ops::reshape(in[0], {n}); },
                    {{"x", random_normal(x, rng)}}};
  });
  r.add("permute", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::permute(in[0], {2, 0, 3, 1}); },
                    {{"x", random_normal(or_default(s, {2, 3, 4, 5}), rng)}}};
  });
  r.add("index_select", [](const Shape& s, std::mt19937_64& rng) {
    return GradCase{[](const Vs& in) { return ops::index_select(in[0], 1, {3, 0, 0, 2}); },
                    {{"x", random_normal(or_default(s, {2, 4, 3}), rng)}}};
  });
  r.add("bce_with_logits", [](const Shape& s, std::mt19937_64& rng) {
    auto sh = or_default(s, {3, 5});
    auto targets = random_uniform(sh, rng, 0.0, 1.0);
    return GradCase{[targets](const Vs& in) { return ops::bce_with_logits(in[0], targets); },
                    {{"logits", random_normal(sh, rng, 2.0)}}};
  });
}

}  // namespace omniscan
