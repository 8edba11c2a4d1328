#pragma once

#include <cstddef>

namespace omniscan::kernels {

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, padding, groups;

  std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  bool depthwise() const { return groups == in_channels && groups == out_channels; }
  bool pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0 && groups == 1; }
};

// Raw-buffer convolution kernels. bias may be null; grad outputs may be null to skip.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_out, T* grad_input,
                     T* grad_weight);

}  // namespace omniscan::kernels
