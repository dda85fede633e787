#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace hgr {

/// Dense 4-D shape. Activations are (batch, height, width, channels);
/// convolution kernels reuse the same container as (kh, kw, in, out).
struct Shape4 {
  std::int64_t n = 0, h = 0, w = 0, c = 0;

  std::int64_t numel() const { return n * h * w * c; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

/// Dense row-major 4-D array of real values. The single value type of the
/// engine; float for training, double for gradient checking.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape) : shape_(shape), data_(check_size(shape), T(0)) {}
  Tensor(Shape4 shape, T fill) : shape_(shape), data_(check_size(shape), fill) {}

  static Tensor zeros(Shape4 shape) { return Tensor(shape); }
  static Tensor full(Shape4 shape, T value) { return Tensor(shape, value); }

  /// Per-batch-item vector of length c, stored as n x 1 x 1 x c.
  static Tensor vector(std::int64_t n, std::int64_t c) {
    return Tensor(Shape4{n, 1, 1, c});
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  std::int64_t index(std::int64_t n, std::int64_t h, std::int64_t w,
                     std::int64_t c) const {
    return ((n * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }

  T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    return data_[static_cast<std::size_t>(index(n, h, w, c))];
  }
  const T& at(std::int64_t n, std::int64_t h, std::int64_t w,
              std::int64_t c) const {
    return data_[static_cast<std::size_t>(index(n, h, w, c))];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(T(0)); }

  /// Releases storage; shape becomes empty.
  void reset() {
    shape_ = Shape4{};
    data_.clear();
    data_.shrink_to_fit();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < size(); ++i)
      out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  static std::size_t check_size(Shape4 s) {
    if (s.n < 0 || s.h < 0 || s.w < 0 || s.c < 0)
      throw ShapeError("tensor shape has a negative dimension: " + s.str());
    return static_cast<std::size_t>(s.numel());
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

/// Throws ShapeError unless both operands share a shape.
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": operand shapes differ, " +
                     a.shape().str() + " vs " + b.shape().str());
}

}  // namespace hgr
