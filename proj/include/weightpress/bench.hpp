#pragma once

// Matrix-vector latency harness: dense W x, CSR-masked (W o M) x, and the
// factored form W1 (W2 x). Timing loops are single-threaded and run the
// variants one after another; every variant is checked against the dense
// product before it is timed.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weightpress/error.hpp"
#include "weightpress/factorize.hpp"
#include "weightpress/prune.hpp"
#include "weightpress/random.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

namespace detail {

// Eight independent partial sums let the compiler vectorize without
// reassociation flags.
inline float dot(const float* a, const float* b, std::size_t n) {
  std::array<float, 8> acc{};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
  }
  float tail = 0.0f;
  for (; j < n; ++j) tail += a[j] * b[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline void check_vec(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                     ", got " + std::to_string(got));
  }
}

}  // namespace detail

/// y = W x into a caller-provided buffer.
inline void dense_matvec(const DenseTensor& w, std::span<const float> x, std::span<float> y) {
  const std::size_t m = w.rows(), n = w.cols();
  detail::check_vec(n, x.size(), "dense_matvec input");
  detail::check_vec(m, y.size(), "dense_matvec output");
  const float* a = w.data().data();
  for (std::size_t i = 0; i < m; ++i) y[i] = detail::dot(a + i * n, x.data(), n);
}

inline std::vector<float> dense_matvec(const DenseTensor& w, std::span<const float> x) {
  std::vector<float> y(w.rows());
  dense_matvec(w, x, y);
  return y;
}

/// y = W1 (W2 x); W_c is never formed. `scratch` must hold rank() floats.
inline void factored_matvec(const FactorPair<float>& f, std::span<const float> x,
                            std::span<float> scratch, std::span<float> y) {
  const std::size_t r = f.w1.cols();
  if (f.w2.rows() != r) throw ShapeError("factor pair inner dimensions differ");
  detail::check_vec(r, scratch.size(), "factored_matvec scratch");
  dense_matvec(f.w2, x, scratch);
  dense_matvec(f.w1, scratch, y);
}

inline std::vector<float> factored_matvec(const FactorPair<float>& f, std::span<const float> x) {
  std::vector<float> t(f.w1.cols()), y(f.w1.rows());
  factored_matvec(f, x, t, y);
  return y;
}

/// Compressed-sparse-row copy of the retained entries of W o M.
class CsrMatrix {
 public:
  static CsrMatrix from_masked(const DenseTensor& w, const RetainMask& mask) {
    if (w.ndim() != 2 || mask.shape() != w.shape()) {
      throw ShapeError("mask " + shape_to_string(mask.shape()) + " does not match " +
                       shape_to_string(w.shape()));
    }
    CsrMatrix c;
    c.rows_ = w.rows();
    c.cols_ = w.cols();
    c.row_ptr_.reserve(c.rows_ + 1);
    c.row_ptr_.push_back(0);
    for (std::size_t i = 0; i < c.rows_; ++i) {
      for (std::size_t j = 0; j < c.cols_; ++j) {
        if (mask(i, j)) {
          c.col_idx_.push_back(static_cast<std::uint32_t>(j));
          c.values_.push_back(w(i, j));
        }
      }
      c.row_ptr_.push_back(c.values_.size());
    }
    return c;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  void matvec(std::span<const float> x, std::span<float> y) const {
    detail::check_vec(cols_, x.size(), "masked_matvec input");
    detail::check_vec(rows_, y.size(), "masked_matvec output");
    for (std::size_t i = 0; i < rows_; ++i) {
      float acc = 0.0f;
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += values_[k] * x[col_idx_[k]];
      y[i] = acc;
    }
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_idx_;
  std::vector<float> values_;
};

inline std::vector<float> masked_matvec(const CsrMatrix& w, std::span<const float> x) {
  std::vector<float> y(w.rows());
  w.matvec(x, y);
  return y;
}

inline std::vector<float> masked_matvec(const DenseTensor& w, const RetainMask& mask,
                                        std::span<const float> x) {
  return masked_matvec(CsrMatrix::from_masked(w, mask), x);
}

/// max_i |a_i - b_i| / max(max_i |b_i|, tiny): relative agreement with an oracle.
inline double relative_deviation(std::span<const float> a, std::span<const float> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    scale = std::max(scale, std::abs(static_cast<double>(b[i])));
  }
  return diff / std::max(scale, 1e-30);
}

enum class Variant { dense, masked, factored };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::dense: return "dense";
    case Variant::masked: return "masked";
    case Variant::factored: return "factored";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "dense") return Variant::dense;
  if (s == "masked") return Variant::masked;
  if (s == "factored") return Variant::factored;
  throw ValueError("unknown bench variant '" + s + "'");
}

struct BenchSize {
  std::size_t m = 0, n = 0, r = 0;
};

struct BenchSpec {
  std::vector<BenchSize> sizes;
  std::vector<Variant> variants{Variant::dense, Variant::masked, Variant::factored};
  std::size_t reps = 50;
  std::size_t warmup = 5;
  double mask_alpha = 0.5;  // fraction pruned for the masked variant
  std::uint64_t seed = 0;
  double agreement_tol = 1e-4;
};

struct BenchResult {
  Variant variant = Variant::dense;
  std::size_t m = 0, n = 0, r = 0;
  std::uint64_t flops_model = 0;
  double median_ns = 0, p10_ns = 0, p90_ns = 0;
  double speedup_vs_dense = 1.0;
  double max_rel_deviation = 0.0;  // vs the dense oracle, measured before timing
  double setup_ns = 0.0;           // CSR build time for the masked variant
};

/// Analytic FLOP counts: dense 2mn, factored 2r(m+n), masked 2 nnz.
inline std::uint64_t flops_dense(std::size_t m, std::size_t n) { return 2ULL * m * n; }
inline std::uint64_t flops_factored(std::size_t m, std::size_t n, std::size_t r) {
  return 2ULL * r * (m + n);
}
inline std::uint64_t flops_masked(std::size_t nnz) { return 2ULL * nnz; }

/// Nearest-rank percentile of an already sorted sample, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
}

namespace detail {

template <typename Fn>
std::vector<double> time_calls(Fn&& fn, std::size_t warmup, std::size_t reps) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ns;
  ns.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  return ns;
}

inline void fill_normal(DenseTensor& t, Rng& rng, double scale) {
  for (auto& v : t.data()) v = static_cast<float>(scale * rng.normal());
}

inline volatile float bench_sink = 0.0f;

}  // namespace detail

/// Times every requested variant at every size. Dense is always measured
/// because it is the speedup baseline. Throws ValueError when a variant
/// disagrees with the dense oracle by more than spec.agreement_tol.
inline std::vector<BenchResult> run_bench(const BenchSpec& spec) {
  if (spec.reps < 30) throw ValueError("reps must be >= 30");
  if (spec.warmup < 5) throw ValueError("warmup must be >= 5");
  std::vector<BenchResult> results;
  for (std::size_t s = 0; s < spec.sizes.size(); ++s) {
    const auto [m, n, r] = spec.sizes[s];
    if (m == 0 || n == 0 || r == 0 || r > std::min(m, n)) {
      throw ValueError("invalid bench size " + std::to_string(m) + "x" + std::to_string(n) +
                       " rank " + std::to_string(r));
    }
    Rng rng(derive_seed(spec.seed, s));
    DenseTensor w = DenseTensor::matrix(m, n);
    detail::fill_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(n)));
    FactorPair<float> pair;
    pair.w1 = DenseTensor::matrix(m, r);
    pair.w2 = DenseTensor::matrix(r, n);
    detail::fill_normal(pair.w1, rng, 1.0 / std::sqrt(static_cast<double>(r)));
    detail::fill_normal(pair.w2, rng, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<float> x(n), y(m), scratch(r);
    for (auto& v : x) v = static_cast<float>(rng.normal());

    auto dense_ns = detail::time_calls(
        [&] {
          dense_matvec(w, x, y);
          detail::bench_sink = y[0];
        },
        spec.warmup, spec.reps);
    const double dense_median = percentile_sorted(dense_ns, 0.5);

    auto record = [&](Variant v, std::uint64_t flops, const std::vector<double>& ns, double dev, double setup) {
      BenchResult b;
      b.variant = v;
      b.m = m;
      b.n = n;
      b.r = r;
      b.flops_model = flops;
      b.median_ns = percentile_sorted(ns, 0.5);
      b.p10_ns = percentile_sorted(ns, 0.1);
      b.p90_ns = percentile_sorted(ns, 0.9);
      b.speedup_vs_dense = b.median_ns > 0 ? dense_median / b.median_ns : 0.0;
      b.max_rel_deviation = dev;
      b.setup_ns = setup;
      results.push_back(b);
    };

    for (Variant v : spec.variants) {
      switch (v) {
        case Variant::dense:
          record(v, flops_dense(m, n), dense_ns, 0.0, 0.0);
          break;
        case Variant::factored: {
          const auto oracle = dense_matvec(compressed_matrix(pair), x);
          const double dev = relative_deviation(factored_matvec(pair, x), oracle);
          if (dev > spec.agreement_tol) {
            throw ValueError("factored matvec deviates from dense oracle by " + std::to_string(dev));
          }
          auto ns = detail::time_calls(
              [&] {
                factored_matvec(pair, x, scratch, y);
                detail::bench_sink = y[0];
              },
              spec.warmup, spec.reps);
          record(v, flops_factored(m, n, r), ns, dev, 0.0);
          break;
        }
        case Variant::masked: {
          PruneConfig pc;
          pc.alpha = spec.mask_alpha;
          const auto pruned = iterative_prune(w, pc);
          const auto t0 = std::chrono::steady_clock::now();
          const CsrMatrix csr = CsrMatrix::from_masked(w, pruned.mask);
          const double setup = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count();
          const auto oracle = dense_matvec(pruned.pruned_weights, x);
          const double dev = relative_deviation(masked_matvec(csr, x), oracle);
          if (dev > spec.agreement_tol) {
            throw ValueError("masked matvec deviates from dense oracle by " + std::to_string(dev));
          }
          auto ns = detail::time_calls(
              [&] {
                csr.matvec(x, y);
                detail::bench_sink = y[0];
              },
              spec.warmup, spec.reps);
          record(v, flops_masked(csr.nnz()), ns, dev, setup);
          break;
        }
      }
    }
  }
  return results;
}

inline nlohmann::json to_json(const BenchResult& b) {
  return {{"variant", to_string(b.variant)},
          {"m", b.m},
          {"n", b.n},
          {"r", b.r},
          {"flops_model", b.flops_model},
          {"median_ns", b.median_ns},
          {"p10_ns", b.p10_ns},
          {"p90_ns", b.p90_ns},
          {"speedup_vs_dense", b.speedup_vs_dense},
          {"max_rel_deviation", b.max_rel_deviation},
          {"setup_ns", b.setup_ns}};
}

inline nlohmann::json to_json(const std::vector<BenchResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : results) arr.push_back(to_json(b));
  return arr;
}

}  // namespace weightpress
