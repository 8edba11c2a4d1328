#include "omniscan/numerics/kernels.hpp"

#include "omniscan/numerics/aligned.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

namespace omniscan::kernels {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col is (channels * kh * kw, out_h * out_w).
template <typename T>
void im2col(const ConvGeometry& g, const T* img, std::size_t channels, T* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* dst = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * oh * ow;
        const T* plane = img + c * g.height * g.width;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
          T* row = dst + y * ow;
          if (iy < 0 || iy >= H) {
            std::fill_n(row, ow, T(0));
            continue;
          }
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pad;
            row[x] = (ix < 0 || ix >= W) ? T(0) : plane[iy * W + ix];
          }
        }
      }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::size_t channels, T* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* src = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * oh * ow;
        T* plane = img + c * g.height * g.width;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
          if (iy < 0 || iy >= H) continue;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pad;
            if (ix >= 0 && ix < W) plane[iy * W + ix] += src[y * ow + x];
          }
        }
      }
}

template <typename T>
void depthwise_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const T* plane = input + (b * g.in_channels + c) * g.height * g.width;
      const T* w = weight + c * g.kernel_h * g.kernel_w;
      T* out = output + (b * g.out_channels + c) * oh * ow;
      const T b0 = bias ? bias[c] : T(0);
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          T acc = b0;
          for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
              const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pad;
              if (ix < 0 || ix >= W) continue;
              acc += w[ki * g.kernel_w + kj] * plane[iy * W + ix];
            }
          }
          out[y * ow + x] = acc;
        }
    }
}

template <typename T>
void depthwise_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_out, T* grad_input,
                        T* grad_weight) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const std::size_t plane_off = (b * g.in_channels + c) * g.height * g.width;
      const T* plane = input + plane_off;
      const T* w = weight + c * g.kernel_h * g.kernel_w;
      T* gw = grad_weight ? grad_weight + c * g.kernel_h * g.kernel_w : nullptr;
      T* gi = grad_input ? grad_input + plane_off : nullptr;
      const T* go = grad_out + (b * g.out_channels + c) * oh * ow;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const T d = go[y * ow + x];
          for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
              const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pad;
              if (ix < 0 || ix >= W) continue;
              if (gw) gw[ki * g.kernel_w + kj] += d * plane[iy * W + ix];
              if (gi) gi[iy * W + ix] += d * w[ki * g.kernel_w + kj];
            }
          }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  if (g.depthwise() && !g.pointwise()) {
    depthwise_forward(g, input, weight, bias, output);
    return;
  }
  const std::size_t cg = g.in_channels / g.groups, og = g.out_channels / g.groups;
  const std::size_t k = cg * g.kernel_h * g.kernel_w;
  const std::size_t hw_out = g.out_h() * g.out_w();
  const std::size_t hw_in = g.height * g.width;
  AlignedVector<T> col(g.pointwise() ? 0 : k * hw_out);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const T* img = input + (b * g.in_channels + grp * cg) * hw_in;
      const T* cols = img;
      if (!g.pointwise()) {
        im2col(g, img, cg, col.data());
        cols = col.data();
      }
      Eigen::Map<const MatR<T>> Wm(weight + grp * og * k, og, k);
      Eigen::Map<const MatR<T>> Cm(cols, k, hw_out);
      Eigen::Map<MatR<T>> Om(output + (b * g.out_channels + grp * og) * hw_out, og, hw_out);
      Om.noalias() = Wm * Cm;
      if (bias)
        for (std::size_t o = 0; o < og; ++o) Om.row(o).array() += bias[grp * og + o];
    }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_out, T* grad_input,
                     T* grad_weight) {
  if (g.depthwise() && !g.pointwise()) {
    depthwise_backward(g, input, weight, grad_out, grad_input, grad_weight);
    return;
  }
  const std::size_t cg = g.in_channels / g.groups, og = g.out_channels / g.groups;
  const std::size_t k = cg * g.kernel_h * g.kernel_w;
  const std::size_t hw_out = g.out_h() * g.out_w();
  const std::size_t hw_in = g.height * g.width;
  AlignedVector<T> col(g.pointwise() ? 0 : k * hw_out);
  AlignedVector<T> dcol(g.pointwise() || !grad_input ? 0 : k * hw_out);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const std::size_t img_off = (b * g.in_channels + grp * cg) * hw_in;
      Eigen::Map<const MatR<T>> Gm(grad_out + (b * g.out_channels + grp * og) * hw_out, og, hw_out);
      Eigen::Map<const MatR<T>> Wm(weight + grp * og * k, og, k);
      if (grad_weight) {
        const T* cols = input + img_off;
        if (!g.pointwise()) {
          im2col(g, input + img_off, cg, col.data());
          cols = col.data();
        }
        Eigen::Map<MatR<T>> GW(grad_weight + grp * og * k, og, k);
        GW.noalias() += Gm * Eigen::Map<const MatR<T>>(cols, k, hw_out).transpose();
      }
      if (grad_input) {
        if (g.pointwise()) {
          Eigen::Map<MatR<T>>(grad_input + img_off, k, hw_out).noalias() += Wm.transpose() * Gm;
        } else {
          Eigen::Map<MatR<T>>(dcol.data(), k, hw_out).noalias() = Wm.transpose() * Gm;
          col2im(g, dcol.data(), cg, grad_input + img_off);
        }
      }
    }
}

template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, const float*, const float*, const float*, float*, float*);
template void conv2d_backward<double>(const ConvGeometry&, const double*, const double*, const double*, double*,
                                      double*);

}  // namespace omniscan::kernels
