#include "omniscan/ssm/selective.hpp"

#include <cmath>

#include "omniscan/numerics/ops.hpp"

namespace omniscan::ssm {

template <typename T>
Var<T> selective_scan(const Var<T>& x, const Var<T>& delta, const Var<T>& a, const Var<T>& b, const Var<T>& c,
                      const Var<T>& d_skip, ScanOptions opt) {
  auto in = std::make_shared<ScanInputs<T>>(
      ScanInputs<T>{x.value(), delta.value(), a.value(), b.value(), c.value(), d_skip.value()});
  const bool needs_grad = grad_enabled() && (x.requires_grad() || delta.requires_grad() || a.requires_grad() ||
                                             b.requires_grad() || c.requires_grad() || d_skip.requires_grad());
  auto saved = std::make_shared<ScanSaved<T>>();
  ScanSaved<T>* target = needs_grad ? saved.get() : nullptr;
  Tensor<T> y = opt.chunk == 0 ? scan_vectorized(*in, target) : scan_parallel(*in, opt.chunk, opt.lanes, target);
  if (!needs_grad) in.reset();
  return record<T>("selective_scan", std::move(y), {x, delta, a, b, c, d_skip}, [in, saved](Node<T>& self) {
    auto g = scan_backward(*in, self.grad, *saved);
    accumulate(*self.inputs[0], g.x);
    accumulate(*self.inputs[1], g.delta);
    accumulate(*self.inputs[2], g.a);
    accumulate(*self.inputs[3], g.b);
    accumulate(*self.inputs[4], g.c);
    accumulate(*self.inputs[5], g.d_skip);
  });
}

template <typename T>
SelectiveSsm<T>::SelectiveSsm(std::size_t channels, std::size_t states, std::mt19937_64& rng)
    : channels_(channels), states_(states) {
  if (channels == 0 || states == 0) throw std::invalid_argument("SelectiveSsm: channels and states must be positive");
  Tensor<T> alog({channels, states});
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < states; ++n) alog.at({d, n}) = static_cast<T>(std::log(static_cast<double>(n + 1)));
  a_log = parameter(std::move(alog));
  w_delta = parameter(init_fan_in<T>({channels, channels}, channels, rng));
  // softplus(bias) uniform in [1e-3, 1e-1]: bias = log(expm1(u)).
  Tensor<T> bias({channels});
  std::uniform_real_distribution<double> step(1e-3, 1e-1);
  for (auto& v : bias.data()) v = static_cast<T>(std::log(std::expm1(step(rng))));
  b_delta = parameter(std::move(bias));
  w_b = parameter(init_fan_in<T>({states, channels}, channels, rng));
  w_c = parameter(init_fan_in<T>({states, channels}, channels, rng));
  d_skip = ones_param<T>({channels});
}

template <typename T>
Var<T> SelectiveSsm<T>::forward(const Var<T>& x, ScanOptions opt) const {
  if (x.shape().size() != 3 || x.dim(1) != channels_)
    throw ShapeError("SelectiveSsm: expected (B, " + std::to_string(channels_) + ", L), got " + shape_str(x.shape()));
  const Var<T> none;
  auto delta = ops::softplus(ops::pointwise(x, w_delta, b_delta));
  auto bk = ops::pointwise(x, w_b, none);
  auto ck = ops::pointwise(x, w_c, none);
  auto a = ops::scale(ops::exp(a_log), T(-1));
  return selective_scan(x, delta, a, bk, ck, d_skip, opt);
}

template <typename T>
Tensor<T> SelectiveSsm<T>::continuous_a() const {
  Tensor<T> a = a_log.value();
  for (auto& v : a.data()) v = -std::exp(v);
  return a;
}

template <typename T>
void SelectiveSsm<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({join_name(prefix, "a_log"), &a_log});
  out.push_back({join_name(prefix, "w_delta"), &w_delta});
  out.push_back({join_name(prefix, "b_delta"), &b_delta});
  out.push_back({join_name(prefix, "w_b"), &w_b});
  out.push_back({join_name(prefix, "w_c"), &w_c});
  out.push_back({join_name(prefix, "d_skip"), &d_skip});
}

template Var<float> selective_scan<float>(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                          const Var<float>&, const Var<float>&, ScanOptions);
template Var<double> selective_scan<double>(const Var<double>&, const Var<double>&, const Var<double>&,
                                            const Var<double>&, const Var<double>&, const Var<double>&, ScanOptions);
template class SelectiveSsm<float>;
template class SelectiveSsm<double>;

}  // namespace omniscan::ssm
