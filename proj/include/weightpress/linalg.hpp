#pragma once

#include <cstddef>
#include <string>

#include "weightpress/error.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

namespace detail {

inline void require_matrix(const Shape& s, const char* what) {
  if (s.size() != 2) {
    throw ShapeError(std::string(what) + " must have 2 axes, got " + shape_to_string(s));
  }
}

}  // namespace detail

/// C = A * B, accumulated in double.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a.shape(), "left operand");
  detail::require_matrix(b.shape(), "right operand");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("cannot multiply " + shape_to_string(a.shape()) + " by " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> c = Tensor<T>::matrix(m, n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = static_cast<double>(a(i, p));
      if (aip == 0.0) continue;
      const T* brow = &b(p, 0);
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c(i, j) = static_cast<T>(row[j]);
  }
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a.shape(), "operand");
  Tensor<T> t = Tensor<T>::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

/// Squared Frobenius distance ||a - b||_F^2 for tensors of equal size.
template <typename T, typename U>
double squared_distance(const Tensor<T>& a, const Tensor<U>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("size mismatch: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace weightpress
