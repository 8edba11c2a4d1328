#include <random>

#include "omniscan/ssm/selective.hpp"

namespace omniscan::ssm {

namespace {

using V = Var<double>;
using Vs = std::vector<V>;

struct Dims4 {
  std::size_t B, D, L, N;
};

Dims4 dims_or_default(const Shape& s) {
  if (s.empty()) return {2, 3, 12, 3};
  if (s.size() != 4) throw ShapeError("ssm gradcheck shape must be {B, D, L, N}, got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

GradCase scan_case(const Shape& shape, std::mt19937_64& rng, ScanSaved<double> layout) {
  const auto [B, D, L, N] = dims_or_default(shape);
  Tensor<double> a = random_uniform({D, N}, rng, -2.0, -0.2);
  return GradCase{[layout](const Vs& in) {
                    auto y = [&] {
                      if (layout.requested_interval == 0)
                        return selective_scan(in[0], in[1], in[2], in[3], in[4], in[5]);
                      // Forward with checkpointed storage, then the explicit backward.
                      auto inputs = std::make_shared<ScanInputs<double>>(ScanInputs<double>{
                          in[0].value(), in[1].value(), in[2].value(), in[3].value(), in[4].value(), in[5].value()});
                      auto saved = std::make_shared<ScanSaved<double>>(layout);
                      auto out = scan_sequential(*inputs, saved.get());
                      return record<double>("selective_scan_recompute", std::move(out), in,
                                            [inputs, saved](Node<double>& self) {
                                              auto g = scan_backward(*inputs, self.grad, *saved);
                                              accumulate(*self.inputs[0], g.x);
                                              accumulate(*self.inputs[1], g.delta);
                                              accumulate(*self.inputs[2], g.a);
                                              accumulate(*self.inputs[3], g.b);
                                              accumulate(*self.inputs[4], g.c);
                                              accumulate(*self.inputs[5], g.d_skip);
                                            });
                    }();
                    return y;
                  },
                  {{"x", random_normal({B, D, L}, rng)},
                   {"delta", random_uniform({B, D, L}, rng, 0.05, 0.8)},
                   {"A", std::move(a)},
                   {"B", random_normal({B, N, L}, rng)},
                   {"C", random_normal({B, N, L}, rng)},
                   {"D", random_normal({D}, rng)}}};
}

}  // namespace

void register_ssm_cases(GradCheckRegistry& r) {
  r.add("selective_scan", [](const Shape& s, std::mt19937_64& rng) { return scan_case(s, rng, {}); });
  r.add("selective_scan_recompute", [](const Shape& s, std::mt19937_64& rng) {
    ScanSaved<double> layout;
    layout.requested_interval = 5;
    return scan_case(s, rng, layout);
  });
  r.add("selective_ssm", [](const Shape& s, std::mt19937_64& rng) {
    const auto [B, D, L, N] = dims_or_default(s);
    SelectiveSsm<double> layer(D, N, rng);
    // Larger steps than the initial range so A and delta receive visible gradients.
    for (auto& v : layer.b_delta.mutable_value().data()) v += 2.0;
    return GradCase{[D, N](const Vs& in) {
                      std::mt19937_64 unused(0);
                      SelectiveSsm<double> m(D, N, unused);
                      m.a_log = in[1];
                      m.w_delta = in[2];
                      m.b_delta = in[3];
                      m.w_b = in[4];
                      m.w_c = in[5];
                      m.d_skip = in[6];
                      return m.forward(in[0]);
                    },
                    {{"x", random_normal({B, D, L}, rng)},
                     {"a_log", layer.a_log.value()},
                     {"w_delta", layer.w_delta.value()},
                     {"b_delta", layer.b_delta.value()},
                     {"w_b", layer.w_b.value()},
                     {"w_c", layer.w_c.value()},
                     {"d_skip", random_normal({D}, rng)}}};
  });
}

}  // namespace omniscan::ssm
