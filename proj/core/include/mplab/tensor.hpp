#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mplab/error.hpp"

namespace mplab {

/// NCHW extents of a dense 4-D tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major NCHW array. Element type is float for models; the same
/// kernels are instantiated for double so gradient checks are not dominated
/// by float rounding.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(checked_numel(shape), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape)) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + to_string(shape));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Pointer to the (n, c) plane.
  T* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Copies image `n` into a tensor of batch size 1.
  BasicTensor slice(int n) const {
    Shape s{1, shape_.c, shape_.h, shape_.w};
    std::vector<T> d(data_.begin() + static_cast<std::ptrdiff_t>(offset(n, 0, 0, 0)),
                     data_.begin() + static_cast<std::ptrdiff_t>(offset(n, 0, 0, 0) + s.numel()));
    return BasicTensor(s, std::move(d));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static std::size_t checked_numel(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ConfigError("negative tensor extent in shape " + to_string(s));
    }
    return s.numel();
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Concatenates tensors along the batch axis; all other extents must agree.
template <typename T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts);

/// Throws NumericError naming `where` if any element is NaN or Inf.
template <typename T>
void require_finite(const BasicTensor<T>& t, const std::string& where);

}  // namespace mplab
