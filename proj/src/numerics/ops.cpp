#include "omniscan/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "omniscan/numerics/kernels.hpp"

namespace omniscan::ops {

namespace {

thread_local std::uint64_t* g_macs = nullptr;

void count_macs(std::uint64_t n) {
  if (g_macs) *g_macs += n;
}

std::string axis_msg(const char* op, std::size_t axis, std::size_t got, std::size_t want) {
  return std::string(op) + ": axis " + std::to_string(axis) + " has extent " + std::to_string(got) + ", expected " +
         std::to_string(want);
}

// Index of the smaller operand for output position i: i / div, or 0 for a scalar.
struct Broadcast {
  Shape out;
  std::size_t div_a = 1, div_b = 1;
  bool scalar_a = false, scalar_b = false;
  std::size_t ia(std::size_t i) const { return scalar_a ? 0 : i / div_a; }
  std::size_t ib(std::size_t i) const { return scalar_b ? 0 : i / div_b; }
};

bool is_channel_bcast(const Shape& big, const Shape& small) {
  return big.size() == 4 && small.size() == 4 && small[0] == big[0] && small[1] == big[1] && small[2] == 1 &&
         small[3] == 1;
}

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    return bc;
  }
  const std::size_t na = shape_numel(a), nb = shape_numel(b);
  if (nb == 1) {
    bc.out = a;
    bc.scalar_b = true;
  } else if (na == 1) {
    bc.out = b;
    bc.scalar_a = true;
  } else if (is_channel_bcast(a, b)) {
    bc.out = a;
    bc.div_b = a[2] * a[3];
  } else if (is_channel_bcast(b, a)) {
    bc.out = b;
    bc.div_a = b[2] * b[3];
  } else {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  }
  return bc;
}

template <typename T, typename F, typename G>
Var<T> unary(const char* name, const Var<T>& a, F f, G df) {
  const auto& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return record<T>(name, std::move(y), {a}, [df](Node<T>& n) {
    const auto& xin = n.inputs[0]->value;
    Tensor<T> g(xin.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad[i] * df(xin[i], n.value[i]);
    accumulate(*n.inputs[0], g);
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Var<T> reduce_sum(const Var<T>& a, T factor, const char* name) {
  T s = T(0);
  for (auto v : a.value().data()) s += v;
  return record<T>(name, Tensor<T>::scalar(s * factor), {a}, [factor](Node<T>& n) {
    Tensor<T> g(n.inputs[0]->value.shape(), n.grad[0] * factor);
    accumulate(*n.inputs[0], g);
  });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto bc = classify(a.shape(), b.shape(), "add");
  Tensor<T> y(bc.out);
  const auto &va = a.value(), &vb = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[bc.ia(i)] + vb[bc.ib(i)];
  return record<T>("add", std::move(y), {a, b}, [bc](Node<T>& n) {
    Tensor<T> ga(n.inputs[0]->value.shape()), gb(n.inputs[1]->value.shape());
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      ga[bc.ia(i)] += n.grad[i];
      gb[bc.ib(i)] += n.grad[i];
    }
    accumulate(*n.inputs[0], ga);
    accumulate(*n.inputs[1], gb);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const auto bc = classify(a.shape(), b.shape(), "sub");
  Tensor<T> y(bc.out);
  const auto &va = a.value(), &vb = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[bc.ia(i)] - vb[bc.ib(i)];
  return record<T>("sub", std::move(y), {a, b}, [bc](Node<T>& n) {
    Tensor<T> ga(n.inputs[0]->value.shape()), gb(n.inputs[1]->value.shape());
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      ga[bc.ia(i)] += n.grad[i];
      gb[bc.ib(i)] -= n.grad[i];
    }
    accumulate(*n.inputs[0], ga);
    accumulate(*n.inputs[1], gb);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const auto bc = classify(a.shape(), b.shape(), "mul");
  Tensor<T> y(bc.out);
  const auto &va = a.value(), &vb = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[bc.ia(i)] * vb[bc.ib(i)];
  return record<T>("mul", std::move(y), {a, b}, [bc](Node<T>& n) {
    const auto &xa = n.inputs[0]->value, &xb = n.inputs[1]->value;
    Tensor<T> ga(xa.shape()), gb(xb.shape());
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      ga[bc.ia(i)] += n.grad[i] * xb[bc.ib(i)];
      gb[bc.ib(i)] += n.grad[i] * xa[bc.ia(i)];
    }
    accumulate(*n.inputs[0], ga);
    accumulate(*n.inputs[1], gb);
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  return unary<T>(
      "add_scalar", a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary<T>(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  return unary<T>(
      "softplus", a, [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) { return sigmoid_scalar(x); });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  return unary<T>(
      "silu", a, [](T x) { return x * sigmoid_scalar(x); },
      [](T x, T) {
        const T s = sigmoid_scalar(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary<T>(
      "sigmoid", a, [](T x) { return sigmoid_scalar(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  return reduce_sum(a, T(1), "sum");
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return reduce_sum(a, T(1) / static_cast<T>(a.value().size()), "mean");
}

MacCounter::MacCounter() : previous_(g_macs) { g_macs = &count_; }
MacCounter::~MacCounter() { g_macs = previous_; }

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (weight.value().rank() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(weight.shape()));
  const std::size_t out_f = weight.dim(0), in_f = weight.dim(1);
  const auto& xs = x.shape();
  if (xs.back() != in_f) throw ShapeError(axis_msg("linear", xs.size() - 1, xs.back(), in_f));
  if (bias.defined() && (bias.value().size() != out_f))
    throw ShapeError(axis_msg("linear bias", 0, bias.value().size(), out_f));
  const std::size_t rows = x.value().size() / in_f;
  Shape ys = xs;
  ys.back() = out_f;
  Tensor<T> y(ys);
  Eigen::Map<const MatR> X(x.value().raw(), rows, in_f);
  Eigen::Map<const MatR> W(weight.value().raw(), out_f, in_f);
  Eigen::Map<MatR> Y(y.raw(), rows, out_f);
  Y.noalias() = X * W.transpose();
  count_macs(static_cast<std::uint64_t>(rows) * in_f * out_f);
  if (bias.defined())
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out_f; ++o) Y(r, o) += bias.value()[o];
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record<T>("linear", std::move(y), inputs, [rows, in_f, out_f](Node<T>& n) {
    Eigen::Map<const MatR> G(n.grad.raw(), rows, out_f);
    auto& xin = *n.inputs[0];
    auto& win = *n.inputs[1];
    if (xin.requires_grad) {
      Tensor<T> gx(xin.value.shape());
      Eigen::Map<MatR>(gx.raw(), rows, in_f).noalias() = G * Eigen::Map<const MatR>(win.value.raw(), out_f, in_f);
      accumulate(xin, gx);
    }
    if (win.requires_grad) {
      Tensor<T> gw(win.value.shape());
      Eigen::Map<MatR>(gw.raw(), out_f, in_f).noalias() =
          G.transpose() * Eigen::Map<const MatR>(xin.value.raw(), rows, in_f);
      accumulate(win, gw);
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      Tensor<T> gb(n.inputs[2]->value.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_f; ++o) gb[o] += G(r, o);
      accumulate(*n.inputs[2], gb);
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, Conv2dOptions opt) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 4) throw ShapeError("conv2d: input must be rank 4 (B,C,H,W), got " + shape_str(xs));
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be rank 4 (O,C/g,kh,kw), got " + shape_str(ws));
  if (opt.groups == 0 || opt.stride == 0) throw ShapeError("conv2d: stride and groups must be positive");
  kernels::ConvGeometry geo{};
  geo.batch = xs[0];
  geo.in_channels = xs[1];
  geo.height = xs[2];
  geo.width = xs[3];
  geo.out_channels = ws[0];
  geo.kernel_h = ws[2];
  geo.kernel_w = ws[3];
  geo.stride = opt.stride;
  geo.padding = opt.padding;
  geo.groups = opt.groups;
  if (geo.in_channels % geo.groups != 0)
    throw ShapeError("conv2d: input channels (axis 1) " + std::to_string(geo.in_channels) +
                     " not divisible by groups " + std::to_string(geo.groups));
  if (geo.out_channels % geo.groups != 0)
    throw ShapeError("conv2d: output channels (weight axis 0) " + std::to_string(geo.out_channels) +
                     " not divisible by groups " + std::to_string(geo.groups));
  if (ws[1] != geo.in_channels / geo.groups)
    throw ShapeError(axis_msg("conv2d weight", 1, ws[1], geo.in_channels / geo.groups));
  if (geo.height + 2 * geo.padding < geo.kernel_h)
    throw ShapeError("conv2d: axis 2 (H) too small for kernel height " + std::to_string(geo.kernel_h));
  if (geo.width + 2 * geo.padding < geo.kernel_w)
    throw ShapeError("conv2d: axis 3 (W) too small for kernel width " + std::to_string(geo.kernel_w));
  if (bias.defined() && bias.value().size() != geo.out_channels)
    throw ShapeError(axis_msg("conv2d bias", 0, bias.value().size(), geo.out_channels));

  Tensor<T> y({geo.batch, geo.out_channels, geo.out_h(), geo.out_w()});
  kernels::conv2d_forward(geo, input.value().raw(), weight.value().raw(),
                          bias.defined() ? bias.value().raw() : nullptr, y.raw());
  count_macs(static_cast<std::uint64_t>(y.size()) * ws[1] * ws[2] * ws[3]);
  std::vector<Var<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record<T>("conv2d", std::move(y), inputs, [geo](Node<T>& n) {
    auto& xin = *n.inputs[0];
    auto& win = *n.inputs[1];
    Tensor<T> gx, gw;
    if (xin.requires_grad) gx = Tensor<T>(xin.value.shape());
    if (win.requires_grad) gw = Tensor<T>(win.value.shape());
    kernels::conv2d_backward(geo, xin.value.raw(), win.value.raw(), n.grad.raw(),
                             xin.requires_grad ? gx.raw() : nullptr, win.requires_grad ? gw.raw() : nullptr);
    if (xin.requires_grad) accumulate(xin, gx);
    if (win.requires_grad) accumulate(win, gw);
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      Tensor<T> gb(n.inputs[2]->value.shape());
      const std::size_t hw = geo.out_h() * geo.out_w();
      for (std::size_t b = 0; b < geo.batch; ++b)
        for (std::size_t o = 0; o < geo.out_channels; ++o) {
          const T* g = n.grad.raw() + (b * geo.out_channels + o) * hw;
          T s = T(0);
          for (std::size_t i = 0; i < hw; ++i) s += g[i];
          gb[o] += s;
        }
      accumulate(*n.inputs[2], gb);
    }
  });
}

template <typename T>
Var<T> pointwise(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4)
    throw ShapeError("pointwise: input must be (B,C,L) or (B,C,H,W), got " + shape_str(xs));
  if (weight.value().rank() != 2) throw ShapeError("pointwise: weight must be (O,C), got " + shape_str(weight.shape()));
  if (weight.dim(1) != xs[1]) throw ShapeError(axis_msg("pointwise", 1, xs[1], weight.dim(1)));
  const std::size_t out_c = weight.dim(0);
  const std::size_t spatial = xs.size() == 3 ? xs[2] : xs[2] * xs[3];
  auto x4 = xs.size() == 3 ? reshape(x, {xs[0], xs[1], spatial, 1}) : x;
  auto w4 = reshape(weight, {out_c, xs[1], 1, 1});
  auto y = conv2d(x4, w4, bias, {});
  if (xs.size() == 3) return reshape(y, {xs[0], out_c, spatial});
  return y;
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t axis, T eps) {
  const auto& xs = x.shape();
  if (axis >= xs.size()) throw ShapeError("layer_norm: axis " + std::to_string(axis) + " out of range");
  const std::size_t n = xs[axis];
  if (n == 0) throw ShapeError("layer_norm: zero-length normalization axis");
  if (gamma.value().size() != n) throw ShapeError(axis_msg("layer_norm gamma", 0, gamma.value().size(), n));
  if (beta.value().size() != n) throw ShapeError(axis_msg("layer_norm beta", 0, beta.value().size(), n));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];

  const auto& xv = x.value();
  Tensor<T> y(xs);
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(outer * inner);
  const T* g = gamma.value().raw();
  const T* bt = beta.value().raw();
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * n * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      T mu = T(0);
      for (std::size_t k = 0; k < n; ++k) mu += xv[base + k * inner + i];
      mu /= static_cast<T>(n);
      T var = T(0);
      for (std::size_t k = 0; k < n; ++k) {
        const T d = xv[base + k * inner + i] - mu;
        var += d * d;
      }
      var /= static_cast<T>(n);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[o * inner + i] = is;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = base + k * inner + i;
        xhat[idx] = (xv[idx] - mu) * is;
        y[idx] = g[k] * xhat[idx] + bt[k];
      }
    }
  }
  return record<T>(
      "layer_norm", std::move(y), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), outer, inner, n](Node<T>& nd) {
        const T* gm = nd.inputs[1]->value.raw();
        Tensor<T> gx(nd.inputs[0]->value.shape());
        Tensor<T> gg(nd.inputs[1]->value.shape()), gb(nd.inputs[2]->value.shape());
        for (std::size_t o = 0; o < outer; ++o) {
          const std::size_t base = o * n * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            T mean_d = T(0), mean_dx = T(0);
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t idx = base + k * inner + i;
              const T dy = nd.grad[idx];
              gg[k] += dy * xhat[idx];
              gb[k] += dy;
              const T dxh = dy * gm[k];
              mean_d += dxh;
              mean_dx += dxh * xhat[idx];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            const T is = inv_std[o * inner + i];
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t idx = base + k * inner + i;
              const T dxh = nd.grad[idx] * gm[k];
              gx[idx] = is * (dxh - mean_d - xhat[idx] * mean_dx);
            }
          }
        }
        accumulate(*nd.inputs[0], gx);
        accumulate(*nd.inputs[1], gg);
        accumulate(*nd.inputs[2], gb);
      });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t groups, T eps) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("group_norm: expected (B, C, H, W), got " + shape_str(xs));
  const std::size_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (groups == 0 || C % groups)
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible by " + std::to_string(groups) +
                     " groups");
  if (HW == 0) throw ShapeError("group_norm: empty spatial extent");
  if (gamma.value().size() != C) throw ShapeError(axis_msg("group_norm gamma", 0, gamma.value().size(), C));
  if (beta.value().size() != C) throw ShapeError(axis_msg("group_norm beta", 0, beta.value().size(), C));
  const std::size_t per = C / groups, span = per * HW;

  const auto& xv = x.value();
  Tensor<T> y(xs), xhat(xs);
  std::vector<T> inv_std(B * groups);
  const T* g = gamma.value().raw();
  const T* bt = beta.value().raw();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (b * C + gi * per) * HW;
      double mu = 0.0, var = 0.0;
      for (std::size_t i = 0; i < span; ++i) mu += xv[base + i];
      mu /= static_cast<double>(span);
      for (std::size_t i = 0; i < span; ++i) {
        const double d = xv[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(span);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      inv_std[b * groups + gi] = is;
      for (std::size_t c = 0; c < per; ++c) {
        const std::size_t ch = gi * per + c;
        for (std::size_t i = 0; i < HW; ++i) {
          const std::size_t idx = base + c * HW + i;
          xhat[idx] = static_cast<T>((xv[idx] - mu) * is);
          y[idx] = g[ch] * xhat[idx] + bt[ch];
        }
      }
    }
  return record<T>(
      "group_norm", std::move(y), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), B, C, HW, groups, per, span](Node<T>& nd) {
        const T* gm = nd.inputs[1]->value.raw();
        Tensor<T> gx(nd.inputs[0]->value.shape());
        Tensor<T> gg(nd.inputs[1]->value.shape()), gb(nd.inputs[2]->value.shape());
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t gi = 0; gi < groups; ++gi) {
            const std::size_t base = (b * C + gi * per) * HW;
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < per; ++c) {
              const std::size_t ch = gi * per + c;
              double sg = 0.0, sb = 0.0;
              for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = base + c * HW + i;
                const double dy = nd.grad[idx];
                sg += dy * xhat[idx];
                sb += dy;
              }
              gg[ch] += static_cast<T>(sg);
              gb[ch] += static_cast<T>(sb);
              mean_d += sb * gm[ch];
              mean_dx += sg * gm[ch];
            }
            mean_d /= static_cast<double>(span);
            mean_dx /= static_cast<double>(span);
            const double is = inv_std[b * groups + gi];
            for (std::size_t c = 0; c < per; ++c) {
              const std::size_t ch = gi * per + c;
              for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t idx = base + c * HW + i;
                gx[idx] = static_cast<T>(is * (nd.grad[idx] * gm[ch] - mean_d - xhat[idx] * mean_dx));
              }
            }
          }
        accumulate(*nd.inputs[0], gx);
        accumulate(*nd.inputs[1], gg);
        accumulate(*nd.inputs[2], gb);
      });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("global_avg_pool: input must be rank 4, got " + shape_str(xs));
  const std::size_t bc = xs[0] * xs[1], hw = xs[2] * xs[3];
  Tensor<T> y({xs[0], xs[1]});
  for (std::size_t i = 0; i < bc; ++i) {
    T s = T(0);
    const T* p = x.value().raw() + i * hw;
    for (std::size_t k = 0; k < hw; ++k) s += p[k];
    y[i] = s / static_cast<T>(hw);
  }
  return record<T>("global_avg_pool", std::move(y), {x}, [bc, hw](Node<T>& n) {
    Tensor<T> g(n.inputs[0]->value.shape());
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < bc; ++i)
      for (std::size_t k = 0; k < hw; ++k) g[i * hw + k] = n.grad[i] * inv;
    accumulate(*n.inputs[0], g);
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("max_pool2d: input must be rank 4, got " + shape_str(xs));
  if (kernel == 0 || stride == 0 || padding >= kernel)
    throw ShapeError("max_pool2d: need kernel > padding and positive stride");
  if (xs[2] + 2 * padding < kernel || xs[3] + 2 * padding < kernel)
    throw ShapeError("max_pool2d: spatial axes smaller than kernel");
  const std::size_t H = xs[2], W = xs[3];
  const std::size_t Ho = (H + 2 * padding - kernel) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kernel) / stride + 1;
  const std::size_t planes = xs[0] * xs[1];
  Tensor<T> y({xs[0], xs[1], Ho, Wo});
  std::vector<std::size_t> arg(y.size());
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < kernel; ++i) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < kernel; ++j) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = p * H * W + static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw);
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (p * Ho + oh) * Wo + ow;
        y[o] = best;
        arg[o] = best_idx;
      }
  return record<T>("max_pool2d", std::move(y), {x}, [arg = std::move(arg)](Node<T>& n) {
    Tensor<T> g(n.inputs[0]->value.shape());
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += n.grad[o];
    accumulate(*n.inputs[0], g);
  });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("upsample_nearest: input must be rank 4, got " + shape_str(xs));
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t H = xs[2], W = xs[3], Ho = H * factor, Wo = W * factor, planes = xs[0] * xs[1];
  Tensor<T> y({xs[0], xs[1], Ho, Wo});
  const auto& xv = x.value();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        y[(p * Ho + oh) * Wo + ow] = xv[(p * H + oh / factor) * W + ow / factor];
  return record<T>("upsample_nearest", std::move(y), {x}, [=](Node<T>& n) {
    Tensor<T> g(n.inputs[0]->value.shape());
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow)
          g[(p * H + oh / factor) * W + ow / factor] += n.grad[(p * Ho + oh) * Wo + ow];
    accumulate(*n.inputs[0], g);
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  Shape out = s0;
  out[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(s0));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) throw ShapeError(axis_msg("concat", i, s[i], s0[i]));
    out[axis] += s[axis];
    extents.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Tensor<T> y(out);
  const std::size_t row = out[axis] * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t blk = extents[k] * inner;
    const T* src = parts[k].value().raw();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * blk, blk, y.raw() + o * row + offset);
    offset += blk;
  }
  return record<T>("concat", std::move(y), parts, [extents, outer, inner, row](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      const std::size_t blk = extents[k] * inner;
      auto& in = *n.inputs[k];
      if (in.requires_grad) {
        Tensor<T> g(in.value.shape());
        for (std::size_t o = 0; o < outer; ++o) std::copy_n(n.grad.raw() + o * row + off, blk, g.raw() + o * blk);
        accumulate(in, g);
      }
      off += blk;
    }
  });
}

template <typename T>
std::vector<Var<T>> split(const Var<T>& x, const std::vector<std::size_t>& sizes, std::size_t axis) {
  const auto& xs = x.shape();
  if (axis >= xs.size()) throw ShapeError("split: axis " + std::to_string(axis) + " out of range");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != xs[axis]) throw ShapeError(axis_msg("split", axis, xs[axis], total));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t row = xs[axis] * inner;
  std::vector<Var<T>> out;
  std::size_t offset = 0;
  for (auto sz : sizes) {
    Shape s = xs;
    s[axis] = sz;
    Tensor<T> y(s);
    const std::size_t blk = sz * inner;
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.value().raw() + o * row + offset, blk, y.raw() + o * blk);
    out.push_back(record<T>("split", std::move(y), {x}, [offset, blk, outer, row](Node<T>& n) {
      auto& in = *n.inputs[0];
      T* g = in.grad_buffer().raw();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < blk; ++i) g[o * row + offset + i] += n.grad[o * blk + i];
    }));
    offset += blk;
  }
  return out;
}

template <typename T>
std::vector<Var<T>> split_channels(const Var<T>& x, std::size_t parts) {
  if (x.shape().size() < 2) throw ShapeError("split_channels: input needs a channel axis");
  const std::size_t c = x.dim(1);
  if (parts == 0 || c % parts != 0)
    throw ShapeError("split_channels: axis 1 extent " + std::to_string(c) + " not divisible into " +
                     std::to_string(parts) + " parts");
  return split(x, std::vector<std::size_t>(parts, c / parts), 1);
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  auto y = x.value().reshaped(std::move(shape));
  return record<T>("reshape", std::move(y), {x}, [](Node<T>& n) { accumulate(*n.inputs[0], n.grad); });
}

namespace {
template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const auto& xs = x.shape();
  Shape ys(xs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) ys[i] = xs[perm[i]];
  const auto xstr = row_major_strides(xs);
  std::vector<std::size_t> src_stride(xs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_stride[i] = xstr[perm[i]];
  Tensor<T> y(ys);
  std::vector<std::size_t> coord(ys.size(), 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = x[src];
    for (std::size_t ax = ys.size(); ax-- > 0;) {
      if (++coord[ax] < ys[ax]) {
        src += src_stride[ax];
        break;
      }
      src -= src_stride[ax] * (ys[ax] - 1);
      coord[ax] = 0;
    }
  }
  return y;
}
}  // namespace

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  const auto& xs = x.shape();
  if (perm.size() != xs.size()) throw ShapeError("permute: permutation length != rank " + std::to_string(xs.size()));
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size())
      throw ShapeError("permute: not a permutation of the axes");
    inv[perm[i]] = i;
  }
  return record<T>("permute", permute_tensor(x.value(), perm), {x},
                   [inv](Node<T>& n) { accumulate(*n.inputs[0], permute_tensor(n.grad, inv)); });
}

template <typename T>
Var<T> index_select(const Var<T>& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  const auto& xs = x.shape();
  if (axis >= xs.size()) throw ShapeError("index_select: axis " + std::to_string(axis) + " out of range");
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  for (auto i : indices)
    if (i >= xs[axis])
      throw ShapeError("index_select: index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  Shape ys = xs;
  ys[axis] = indices.size();
  Tensor<T> y(ys);
  const std::size_t n_in = xs[axis], n_out = indices.size();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n_out; ++k)
      std::copy_n(x.value().raw() + (o * n_in + indices[k]) * inner, inner, y.raw() + (o * n_out + k) * inner);
  return record<T>("index_select", std::move(y), {x}, [indices, outer, inner, n_in, n_out](Node<T>& n) {
    Tensor<T> g(n.inputs[0]->value.shape());
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < n_out; ++k) {
        T* dst = g.raw() + (o * n_in + indices[k]) * inner;
        const T* src = n.grad.raw() + (o * n_out + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    accumulate(*n.inputs[0], g);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = x.value().raw() + r * n;
    T* q = y.raw() + r * n;
    const T m = *std::max_element(p, p + n);
    T s = T(0);
    for (std::size_t k = 0; k < n; ++k) s += (q[k] = std::exp(p[k] - m));
    for (std::size_t k = 0; k < n; ++k) q[k] /= s;
  }
  return record<T>("softmax", std::move(y), {x}, [rows, n](Node<T>& nd) {
    Tensor<T> g(nd.inputs[0]->value.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yv = nd.value.raw() + r * n;
      const T* dy = nd.grad.raw() + r * n;
      T dot = T(0);
      for (std::size_t k = 0; k < n; ++k) dot += dy[k] * yv[k];
      for (std::size_t k = 0; k < n; ++k) g[r * n + k] = yv[k] * (dy[k] - dot);
    }
    accumulate(*nd.inputs[0], g);
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets, Reduction reduction) {
  if (logits.value().size() != targets.size())
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  const auto& z = logits.value();
  T total = T(0);
  for (std::size_t i = 0; i < z.size(); ++i)
    total += std::max(z[i], T(0)) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i])));
  const T factor = reduction == Reduction::Mean ? T(1) / static_cast<T>(z.size()) : T(1);
  return record<T>("bce_with_logits", Tensor<T>::scalar(total * factor), {logits}, [targets, factor](Node<T>& n) {
    const auto& zin = n.inputs[0]->value;
    Tensor<T> g(zin.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (sigmoid_scalar(zin[i]) - targets[i]) * factor * n.grad[0];
    accumulate(*n.inputs[0], g);
  });
}

#define OMNISCAN_INSTANTIATE(T)                                                                          \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> scale<T>(const Var<T>&, T);                                                             \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                                        \
  template Var<T> exp<T>(const Var<T>&);                                                                  \
  template Var<T> softplus<T>(const Var<T>&);                                                             \
  template Var<T> silu<T>(const Var<T>&);                                                                 \
  template Var<T> relu<T>(const Var<T>&);                                                                 \
  template Var<T> sigmoid<T>(const Var<T>&);                                                              \
  template Var<T> sum<T>(const Var<T>&);                                                                  \
  template Var<T> mean<T>(const Var<T>&);                                                                 \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                  \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dOptions);                   \
  template Var<T> pointwise<T>(const Var<T>&, const Var<T>&, const Var<T>&);                               \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, T);              \
  template Var<T> group_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, T);              \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                      \
  template Var<T> max_pool2d<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);                    \
  template Var<T> upsample_nearest<T>(const Var<T>&, std::size_t);                                        \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                                     \
  template std::vector<Var<T>> split<T>(const Var<T>&, const std::vector<std::size_t>&, std::size_t);     \
  template std::vector<Var<T>> split_channels<T>(const Var<T>&, std::size_t);                             \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                                       \
  template Var<T> permute<T>(const Var<T>&, const std::vector<std::size_t>&);                             \
  template Var<T> index_select<T>(const Var<T>&, std::size_t, const std::vector<std::size_t>&);           \
  template Var<T> softmax<T>(const Var<T>&);                                                              \
  template Var<T> bce_with_logits<T>(const Var<T>&, const Tensor<T>&, Reduction);

OMNISCAN_INSTANTIATE(float)
OMNISCAN_INSTANTIATE(double)
#undef OMNISCAN_INSTANTIATE

}  // namespace omniscan::ops
