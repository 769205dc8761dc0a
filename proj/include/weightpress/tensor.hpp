#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "weightpress/error.hpp"

namespace weightpress {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Row-major strides for a shape; the last axis has stride 1.
inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

/**
 * N-dimensional dense array in row-major order.
 *
 * The scalar type is a template parameter so numerical kernels can run in
 * double while weights are stored and serialized as float (`DenseTensor`).
 * Every axis has size >= 1 and the element count equals the shape product.
 */
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, std::string name = {})
      : shape_(std::move(shape)), name_(std::move(name)) {
    check_shape();
    data_.assign(shape_numel(shape_), T{});
  }

  Tensor(Shape shape, std::vector<T> data, std::string name = {})
      : shape_(std::move(shape)), data_(std::move(data)), name_(std::move(name)) {
    check_shape();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> data, std::string name = {})
      : Tensor(std::move(shape), std::vector<T>(data), std::move(name)) {}

  static Tensor matrix(std::size_t rows, std::size_t cols) {
    return Tensor(Shape{rows, cols});
  }

  static Tensor identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }

  /// Flat offset of a multi-index; throws on rank or bounds violations.
  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index has " + std::to_string(index.size()) +
                       " axes, tensor has " + std::to_string(shape_.size()));
    }
    std::size_t flat = 0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (index[k] >= shape_[k]) throw ShapeError("index out of bounds");
      flat = flat * shape_[k] + index[k];
    }
    return flat;
  }

  T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::span<const std::size_t> index) const {
    return data_[offset(index)];
  }

  /// Same data under a new shape with an equal element count.
  Tensor reshape(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                       shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_, name_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out), name_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor needs at least one axis");
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("zero-sized axis in " + shape_to_string(shape_));
    }
  }
  void require_matrix() const {
    if (shape_.size() != 2) {
      throw ShapeError("expected a 2-axis tensor, got " + shape_to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
  std::string name_;
};

using DenseTensor = Tensor<float>;

/// Binary keep/prune flags congruent to a weight tensor (1 = keep).
using RetainMask = Tensor<std::uint8_t>;

/// (C_out, C_in, H, W) -> (C_out, C_in*H*W). Row-major data is unchanged.
template <typename T>
Tensor<T> flatten_conv(const Tensor<T>& w) {
  if (w.ndim() != 4) {
    throw ShapeError("flatten_conv expects 4 axes, got " + shape_to_string(w.shape()));
  }
  const auto& s = w.shape();
  return w.reshape({s[0], s[1] * s[2] * s[3]});
}

/// Inverse of flatten_conv for a known 4-axis shape.
template <typename T>
Tensor<T> unflatten_conv(const Tensor<T>& w_f, const Shape& conv_shape) {
  if (conv_shape.size() != 4) throw ShapeError("target shape must have 4 axes");
  if (w_f.ndim() != 2 || w_f.rows() != conv_shape[0]) {
    throw ShapeError("flattened tensor " + shape_to_string(w_f.shape()) +
                     " does not match " + shape_to_string(conv_shape));
  }
  return w_f.reshape(conv_shape);
}

/// View any weight tensor as a matrix: 2-axis as-is, 4-axis flattened,
/// 1-axis as a single row, other ranks as (shape[0], rest).
template <typename T>
Tensor<T> as_matrix(const Tensor<T>& w) {
  switch (w.ndim()) {
    case 1:
      return w.reshape({1, w.size()});
    case 2:
      return w;
    case 4:
      return flatten_conv(w);
    default:
      return w.reshape({w.shape()[0], w.size() / w.shape()[0]});
  }
}

template <typename T>
double squared_norm(const Tensor<T>& t) {
  double acc = 0.0;
  for (T v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
double frobenius_norm(const Tensor<T>& t) {
  return std::sqrt(squared_norm(t));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <typename T>
std::size_t count_zeros(const Tensor<T>& t) {
  std::size_t n = 0;
  for (T v : t.data()) n += (v == T{}) ? 1 : 0;
  return n;
}

}  // namespace weightpress
