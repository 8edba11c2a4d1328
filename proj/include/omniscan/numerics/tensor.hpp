#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <initializer_list>
#include <vector>

#include "omniscan/numerics/aligned.hpp"

namespace omniscan {

using Shape = std::vector<std::size_t>;

/// Raised for every shape/axis contract violation; the message names the axis.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value check fails (non-finite data, bad numeric argument).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);
std::vector<std::size_t> row_major_strides(const Shape& shape);

/// Dense row-major tensor. Image tensors are channel-first (B, C, H, W).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);
  Tensor(Shape shape, AlignedVector<T> data);
  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), AlignedVector<T>(data)) {}

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element at a full coordinate; bounds-checked.
  T& at(std::initializer_list<std::size_t> index);
  T at(std::initializer_list<std::size_t> index) const;

  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Tensor reshaped(Shape shape) const;
  void fill(T v);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace omniscan
