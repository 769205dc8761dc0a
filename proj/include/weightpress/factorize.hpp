#pragma once

// Low-rank factorization W ~= W1 W2 by annealed gradient descent.
//
// The "temperature" is the step size: eta_t = eta0 * decay^t. Each iteration
// tries a full gradient step and halves it (at most kMaxHalvings times) until
// the loss does not increase, so accepted iterates are monotone by
// construction. If no halving helps, the run stops at the current iterate.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "weightpress/error.hpp"
#include "weightpress/linalg.hpp"
#include "weightpress/random.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

struct AnnealConfig {
  std::size_t rank = 1;
  std::optional<double> init_scale;  // default 1 / sqrt(max(m, n))
  std::optional<double> eta0;        // default kDefaultEtaScale / ||W||_F
  double decay = 0.999;
  std::size_t max_iters = 2000;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;

  static constexpr double kDefaultEtaScale = 1.0;
  static constexpr int kMaxHalvings = 20;

  void validate() const {
    if (rank < 1) throw ValueError("anneal rank must be >= 1");
    if (init_scale && !(*init_scale > 0.0)) throw ValueError("init_scale must be > 0");
    if (eta0 && !(*eta0 > 0.0)) throw ValueError("eta0 must be > 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ValueError("decay must lie in (0, 1]");
    if (max_iters < 1) throw ValueError("max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw ValueError("rel_tol must be > 0");
  }
};

template <typename T>
struct FactorPair {
  Tensor<T> w1;  // m x r
  Tensor<T> w2;  // r x n
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // initial loss, then one entry per accepted step

  std::size_t rank() const { return w1.cols(); }
  /// Stored parameter count r * (m + n).
  std::size_t parameter_count() const { return w1.size() + w2.size(); }
};

namespace detail {

inline void check_factor_shapes(const Shape& w, const Shape& w1, const Shape& w2) {
  if (w.size() != 2 || w1.size() != 2 || w2.size() != 2 || w1[0] != w[0] ||
      w2[1] != w[1] || w1[1] != w2[0]) {
    throw ShapeError("factor shapes " + shape_to_string(w1) + " x " + shape_to_string(w2) +
                     " do not conform to " + shape_to_string(w));
  }
}

// R = W1 W2 - W in double.
template <typename T, typename U>
std::vector<double> residual(const Tensor<T>& w, const Tensor<U>& w1, const Tensor<U>& w2) {
  const std::size_t m = w.rows(), n = w.cols(), r = w1.cols();
  std::vector<double> res(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &res[i * n];
    for (std::size_t j = 0; j < n; ++j) row[j] = -static_cast<double>(w(i, j));
    for (std::size_t k = 0; k < r; ++k) {
      const double a = static_cast<double>(w1(i, k));
      const U* b = &w2(k, 0);
      for (std::size_t j = 0; j < n; ++j) row[j] += a * static_cast<double>(b[j]);
    }
  }
  return res;
}

}  // namespace detail

/// ||W - W1 W2||_F^2.
template <typename T, typename U>
double frobenius_loss(const Tensor<T>& w, const Tensor<U>& w1, const Tensor<U>& w2) {
  detail::check_factor_shapes(w.shape(), w1.shape(), w2.shape());
  double acc = 0.0;
  for (double x : detail::residual(w, w1, w2)) acc += x * x;
  return acc;
}

/// Gradients of frobenius_loss: G1 = 2 (W1 W2 - W) W2^T, G2 = 2 W1^T (W1 W2 - W).
template <typename T, typename U>
std::pair<Tensor<U>, Tensor<U>> loss_gradient(const Tensor<T>& w, const Tensor<U>& w1,
                                              const Tensor<U>& w2) {
  detail::check_factor_shapes(w.shape(), w1.shape(), w2.shape());
  const std::size_t m = w.rows(), n = w.cols(), r = w1.cols();
  const auto res = detail::residual(w, w1, w2);
  Tensor<U> g1 = Tensor<U>::matrix(m, r);
  Tensor<U> g2 = Tensor<U>::matrix(r, n);
  std::vector<double> acc2(r * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &res[i * n];
    for (std::size_t k = 0; k < r; ++k) {
      const U* b = &w2(k, 0);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * static_cast<double>(b[j]);
      g1(i, k) = static_cast<U>(2.0 * s);
      const double a = static_cast<double>(w1(i, k));
      double* out = &acc2[k * n];
      for (std::size_t j = 0; j < n; ++j) out[j] += a * row[j];
    }
  }
  for (std::size_t x = 0; x < acc2.size(); ++x) g2[x] = static_cast<U>(2.0 * acc2[x]);
  return {std::move(g1), std::move(g2)};
}

/// W_c = W1 W2.
template <typename T>
Tensor<T> compressed_matrix(const FactorPair<T>& f) {
  return matmul(f.w1, f.w2);
}

/// Fits W1 (m x r), W2 (r x n) to a 2-axis W. Optimization runs in double;
/// the returned factors are cast to T and final_loss is evaluated on them.
template <typename T>
FactorPair<T> anneal_factorize(const Tensor<T>& w, const AnnealConfig& cfg) {
  cfg.validate();
  detail::require_matrix(w.shape(), "factorization target");
  const std::size_t m = w.rows(), n = w.cols(), r = cfg.rank;
  if (r > std::min(m, n)) {
    throw ValueError("anneal rank " + std::to_string(r) + " exceeds min(" + std::to_string(m) +
                     ", " + std::to_string(n) + ")");
  }
  const Tensor<double> target = w.template cast<double>();
  const double norm = frobenius_norm(target);
  if (!std::isfinite(norm)) throw DivergenceError("non-finite loss at iteration 0", 0);

  const double scale = cfg.init_scale.value_or(1.0 / std::sqrt(static_cast<double>(std::max(m, n))));
  const double eta0 = cfg.eta0.value_or(norm > 0.0 ? AnnealConfig::kDefaultEtaScale / norm : 1.0);

  Rng rng(cfg.seed);
  Tensor<double> a = Tensor<double>::matrix(m, r);
  Tensor<double> b = Tensor<double>::matrix(r, n);
  for (auto& x : a.data()) x = rng.uniform(-scale, scale);
  for (auto& x : b.data()) x = rng.uniform(-scale, scale);

  FactorPair<T> out;
  double loss = frobenius_loss(target, a, b);
  out.loss_trace.push_back(loss);

  Tensor<double> ca = a, cb = b;
  double eta = eta0;
  for (std::size_t it = 0; it < cfg.max_iters && loss > 0.0; ++it) {
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite loss at iteration " + std::to_string(it), it);
    }
    const auto [g1, g2] = loss_gradient(target, a, b);
    double step = eta;
    double cand = loss;
    bool accepted = false;
    for (int h = 0; h <= AnnealConfig::kMaxHalvings; ++h, step *= 0.5) {
      for (std::size_t x = 0; x < a.size(); ++x) ca[x] = a[x] - step * g1[x];
      for (std::size_t x = 0; x < b.size(); ++x) cb[x] = b[x] - step * g2[x];
      cand = frobenius_loss(target, ca, cb);
      if (std::isfinite(cand) && cand <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    std::swap(a, ca);
    std::swap(b, cb);
    const double improvement = (loss - cand) / loss;
    loss = cand;
    out.loss_trace.push_back(loss);
    if (improvement < cfg.rel_tol) break;
    eta *= cfg.decay;
  }

  out.w1 = a.template cast<T>();
  out.w2 = b.template cast<T>();
  out.final_loss = frobenius_loss(w, out.w1, out.w2);
  if (!std::isfinite(out.final_loss)) {
    throw DivergenceError("non-finite loss after casting factors", out.loss_trace.size());
  }
  return out;
}

}  // namespace weightpress
