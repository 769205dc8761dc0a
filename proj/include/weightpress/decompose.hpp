#pragma once

// Truncated SVD of flattened weight tensors.
//
// The decomposition is a one-sided (Hestenes) Jacobi SVD evaluated in double
// precision regardless of the storage type. It converges to full relative
// accuracy on small singular values, which keeps Eckart-Young tails exact to
// roughly machine precision at the sizes this library targets.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "weightpress/error.hpp"
#include "weightpress/linalg.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

/// (U_r, sigma_r, V_r) with W_f ~= U_r diag(sigma_r) V_r^T.
template <typename T>
struct SvdFactors {
  Tensor<T> u;               // m x r, orthonormal columns
  std::vector<T> sigma;      // r values, non-increasing, >= 0
  Tensor<T> v;               // n x r, orthonormal columns
  Shape original_shape;      // shape before flattening

  std::size_t rank() const noexcept { return sigma.size(); }
  std::size_t rows() const { return u.rows(); }
  std::size_t cols() const { return v.rows(); }

  /// Stored parameter count r * (m + n + 1).
  std::size_t parameter_count() const { return rank() * (rows() + cols() + 1); }
};

namespace detail {

struct JacobiResult {
  std::vector<std::vector<double>> left;   // q columns of length p (unnormalized)
  std::vector<std::vector<double>> right;  // q columns of length q
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Orthogonalizes the q columns of a p x q matrix (p >= q) by plane rotations,
// accumulating the rotations into `right`.
inline JacobiResult one_sided_jacobi(std::vector<std::vector<double>> cols) {
  const std::size_t q = cols.size();
  const std::size_t p = q ? cols[0].size() : 0;
  JacobiResult r;
  r.right.assign(q, std::vector<double>(q, 0.0));
  for (std::size_t j = 0; j < q; ++j) r.right[j][j] = 1.0;

  const double tol = static_cast<double>(std::max<std::size_t>(p, 1)) *
                     std::numeric_limits<double>::epsilon();
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < q; ++i) {
      for (std::size_t j = i + 1; j < q; ++j) {
        auto& ci = cols[i];
        auto& cj = cols[j];
        const double alpha = dot(ci, ci);
        const double beta = dot(cj, cj);
        const double gamma = dot(ci, cj);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < p; ++k) {
          const double a = ci[k], b = cj[k];
          ci[k] = c * a - s * b;
          cj[k] = s * a + c * b;
        }
        auto& vi = r.right[i];
        auto& vj = r.right[j];
        for (std::size_t k = 0; k < q; ++k) {
          const double a = vi[k], b = vj[k];
          vi[k] = c * a - s * b;
          vj[k] = s * a + c * b;
        }
      }
    }
    if (!rotated) break;
  }
  r.left = std::move(cols);
  return r;
}

// Replaces degenerate left vectors by unit vectors orthogonal to the rest.
inline void complete_basis(std::vector<std::vector<double>>& basis, const std::vector<bool>& valid) {
  const std::size_t p = basis.empty() ? 0 : basis[0].size();
  std::vector<bool> ok = valid;
  for (std::size_t j = 0; j < basis.size(); ++j) {
    if (ok[j]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < p; ++e) {
      std::vector<double> cand(p, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < basis.size(); ++k) {
          if (!ok[k]) continue;
          const double proj = dot(cand, basis[k]);
          for (std::size_t x = 0; x < p; ++x) cand[x] -= proj * basis[k][x];
        }
      }
      const double nrm = std::sqrt(dot(cand, cand));
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    for (auto& x : best) x /= best_norm;
    basis[j] = std::move(best);
    ok[j] = true;
  }
}

}  // namespace detail

/// Full thin SVD of a 2-axis tensor: rank min(m, n).
template <typename T>
SvdFactors<T> svd(const Tensor<T>& w_f) {
  detail::require_matrix(w_f.shape(), "svd input");
  if (!all_finite(w_f)) throw ValueError("svd input contains non-finite values");
  const std::size_t m = w_f.rows(), n = w_f.cols();
  const bool transposed = m < n;
  const std::size_t p = transposed ? n : m;  // column length
  const std::size_t q = transposed ? m : n;  // column count = rank

  std::vector<std::vector<double>> cols(q, std::vector<double>(p));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(w_f(i, j));
      if (transposed) cols[i][j] = x; else cols[j][i] = x;
    }
  }
  auto jr = detail::one_sided_jacobi(std::move(cols));

  std::vector<double> sig(q);
  for (std::size_t j = 0; j < q; ++j) sig[j] = std::sqrt(detail::dot(jr.left[j], jr.left[j]));
  std::vector<std::size_t> order(q);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sig[a] > sig[b]; });

  const double smax = q ? sig[order[0]] : 0.0;
  const double floor = smax * static_cast<double>(p) * std::numeric_limits<double>::epsilon();
  std::vector<std::vector<double>> left(q), right(q);
  std::vector<double> sorted(q);
  std::vector<bool> valid(q);
  for (std::size_t k = 0; k < q; ++k) {
    const std::size_t j = order[k];
    sorted[k] = sig[j];
    right[k] = std::move(jr.right[j]);
    valid[k] = sig[j] > 0.0 && sig[j] > floor;
    left[k] = std::move(jr.left[j]);
    if (valid[k]) {
      for (auto& x : left[k]) x /= sig[j];
    }
  }
  detail::complete_basis(left, valid);

  // Deterministic signs: first clearly nonzero entry of each U column >= 0.
  auto& ucols = transposed ? right : left;
  auto& vcols = transposed ? left : right;
  for (std::size_t k = 0; k < q; ++k) {
    for (double x : ucols[k]) {
      if (std::abs(x) > 1e-12) {
        if (x < 0.0) {
          for (auto& y : ucols[k]) y = -y;
          for (auto& y : vcols[k]) y = -y;
        }
        break;
      }
    }
  }

  SvdFactors<T> f;
  f.u = Tensor<T>::matrix(m, q);
  f.v = Tensor<T>::matrix(n, q);
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t i = 0; i < m; ++i) f.u(i, k) = static_cast<T>(ucols[k][i]);
    for (std::size_t i = 0; i < n; ++i) f.v(i, k) = static_cast<T>(vcols[k][i]);
  }
  f.sigma.resize(q);
  for (std::size_t k = 0; k < q; ++k) f.sigma[k] = static_cast<T>(sorted[k]);
  f.original_shape = w_f.shape();
  return f;
}

/// Keeps the leading r singular triples. r == rank() returns the input.
template <typename T>
SvdFactors<T> truncate(const SvdFactors<T>& f, std::size_t r) {
  if (r < 1 || r > f.rank()) {
    throw ValueError("truncation rank " + std::to_string(r) + " outside [1, " +
                     std::to_string(f.rank()) + "]");
  }
  if (r == f.rank()) return f;
  SvdFactors<T> out;
  const std::size_t m = f.rows(), n = f.cols(), full = f.rank();
  out.u = Tensor<T>::matrix(m, r);
  out.v = Tensor<T>::matrix(n, r);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < r; ++k) out.u(i, k) = f.u[i * full + k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < r; ++k) out.v(i, k) = f.v[i * full + k];
  }
  out.sigma.assign(f.sigma.begin(), f.sigma.begin() + static_cast<std::ptrdiff_t>(r));
  out.original_shape = f.original_shape;
  return out;
}

/// U diag(sigma) V^T reshaped to the original (possibly 4-axis) shape.
template <typename T>
Tensor<T> reconstruct(const SvdFactors<T>& f) {
  detail::require_matrix(f.u.shape(), "u");
  detail::require_matrix(f.v.shape(), "v");
  const std::size_t m = f.u.rows(), n = f.v.rows(), r = f.sigma.size();
  if (f.u.cols() != r || f.v.cols() != r) {
    throw ShapeError("factor shapes " + shape_to_string(f.u.shape()) + ", " +
                     shape_to_string(f.v.shape()) + " inconsistent with " +
                     std::to_string(r) + " singular values");
  }
  if (!f.original_shape.empty() && shape_numel(f.original_shape) != m * n) {
    throw ShapeError("original shape " + shape_to_string(f.original_shape) +
                     " does not hold a " + std::to_string(m) + "x" + std::to_string(n) + " matrix");
  }
  Tensor<T> out = Tensor<T>::matrix(m, n);
  std::vector<double> us(r);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < r; ++k) {
      us[k] = static_cast<double>(f.u(i, k)) * static_cast<double>(f.sigma[k]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += us[k] * static_cast<double>(f.v(j, k));
      out(i, j) = static_cast<T>(acc);
    }
  }
  if (f.original_shape.empty() || f.original_shape == out.shape()) return out;
  return out.reshape(f.original_shape);
}

/// SVD of any weight tensor (4-axis tensors are flattened first) truncated to r.
template <typename T>
SvdFactors<T> decompose(const Tensor<T>& w, std::size_t r) {
  SvdFactors<T> f = svd(as_matrix(w));
  f.original_shape = w.shape();
  return truncate(f, r);
}

/// Squared tail sum over sigma[r:], the best achievable rank-r error.
template <typename T>
double eckart_young_tail(const std::vector<T>& sigma, std::size_t r) {
  double acc = 0.0;
  for (std::size_t i = r; i < sigma.size(); ++i) {
    acc += static_cast<double>(sigma[i]) * static_cast<double>(sigma[i]);
  }
  return acc;
}

}  // namespace weightpress
