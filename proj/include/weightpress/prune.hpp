#pragma once

// Probabilistic magnitude pruning with neighbor entanglement.
//
// Importance is |w|, turned into retention probabilities by a softmax. A
// threshold on those probabilities is calibrated so that round(alpha * N)
// weights fall below it; pruning runs over several stages, each followed by
// one entanglement pass that may also prune the neighbors of pruned weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "weightpress/error.hpp"
#include "weightpress/random.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

struct PruneConfig {
  double alpha = 0.0;          // target fraction of weights removed, [0, 1)
  std::size_t stages = 1;      // iterative rounds, >= 1
  double entangle_prob = 0.0;  // neighbor pruning probability, [0, 1]
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) {
      throw ValueError("alpha must lie in [0, 1), got " + std::to_string(alpha));
    }
    if (stages < 1) throw ValueError("stages must be >= 1");
    if (!(entangle_prob >= 0.0 && entangle_prob <= 1.0)) {
      throw ValueError("entangle_prob must lie in [0, 1], got " +
                       std::to_string(entangle_prob));
    }
  }
};

/// Threshold lambda plus the number of entries equal to lambda that are still
/// pruned because they come first in flat-index order.
struct Threshold {
  double lambda = 0.0;
  std::size_t ties_pruned = 0;
};

template <typename T>
struct PruneResult {
  RetainMask mask;
  Tensor<T> pruned_weights;
  double achieved_sparsity = 0.0;
  std::vector<double> per_stage_sparsity;
};

template <typename T>
Tensor<T> importance(const Tensor<T>& w) {
  Tensor<T> out = w;
  for (auto& v : out.data()) v = static_cast<T>(std::abs(v));
  return out;
}

/// Softmax over all elements, evaluated with max subtraction.
template <typename T>
Tensor<T> softmax_probs(const Tensor<T>& imp) {
  if (imp.empty()) throw ValueError("softmax of an empty tensor");
  const auto in = imp.data();
  const double peak = static_cast<double>(*std::max_element(in.begin(), in.end()));
  std::vector<double> e(in.size());
  double z = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    e[i] = std::exp(static_cast<double>(in[i]) - peak);
    z += e[i];
  }
  Tensor<T> out(imp.shape());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<T>(e[i] / z);
  return out;
}

/// Threshold pruning exactly `k` of the probabilities: entries are ordered by
/// (probability, flat index) and the first k are pruned. k is clamped to N - 1.
template <typename T>
Threshold calibrate_threshold_count(std::span<const T> p, std::size_t k) {
  const std::size_t n = p.size();
  if (n == 0) throw ValueError("cannot calibrate a threshold on no elements");
  k = std::min(k, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    return p[a] < p[b] || (p[a] == p[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                   order.end(), less);
  Threshold th;
  th.lambda = static_cast<double>(p[order[k]]);
  std::size_t below = 0;
  for (T v : p) below += static_cast<double>(v) < th.lambda ? 1 : 0;
  th.ties_pruned = k - below;
  return th;
}

template <typename T>
Threshold calibrate_threshold(const Tensor<T>& p, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ValueError("alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
  const auto k = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(p.size())));
  return calibrate_threshold_count(p.data(), k);
}

/// Retain mask: 1 where p >= lambda, except that the first `ties_pruned`
/// entries equal to lambda (by flat index) are pruned as well.
template <typename T>
RetainMask retain_mask(const Tensor<T>& p, const Threshold& th) {
  RetainMask mask(p.shape());
  std::size_t ties = th.ties_pruned;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = static_cast<double>(p[i]);
    bool keep = v >= th.lambda;
    if (keep && v == th.lambda && ties > 0) {
      keep = false;
      --ties;
    }
    mask[i] = keep ? 1 : 0;
  }
  return mask;
}

template <typename T>
RetainMask retain_mask(const Tensor<T>& p, double lambda) {
  return retain_mask(p, Threshold{lambda, 0});
}

/// One non-cascading entanglement pass. For every weight pruned in `mask`,
/// each neighbor retained in `mask` is pruned independently with probability
/// `entangle_prob`. Neighbors are +-1 along the last axis; 4-axis tensors
/// also use +-1 along axis 2, giving the 4-neighborhood of the H x W plane.
/// Draws happen in flat order (left, right, up, down) so the result depends
/// only on the seed.
inline RetainMask entangle(const RetainMask& mask, double entangle_prob, std::uint64_t seed) {
  if (!(entangle_prob >= 0.0 && entangle_prob <= 1.0)) {
    throw ValueError("entangle_prob must lie in [0, 1], got " + std::to_string(entangle_prob));
  }
  for (auto v : mask.data()) {
    if (v > 1) throw ValueError("mask is not binary");
  }
  RetainMask out = mask;
  if (entangle_prob == 0.0) return out;

  const auto& shape = mask.shape();
  const std::size_t width = shape.back();
  const std::size_t height = shape.size() == 4 ? shape[2] : 1;
  Rng rng(seed);

  auto visit = [&](std::size_t j) {
    if (mask[j] == 1 && rng.bernoulli(entangle_prob)) out[j] = 0;
  };
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) continue;
    const std::size_t x = i % width;
    const std::size_t y = (i / width) % height;
    if (x > 0) visit(i - 1);
    if (x + 1 < width) visit(i + 1);
    if (y > 0) visit(i - width);
    if (y + 1 < height) visit(i + width);
  }
  return out;
}

/// Staged pruning. Stage t brings the cumulative pruned count up to
/// round(alpha * t / stages * N), choosing victims among the surviving
/// weights by a softmax recomputed over the survivors only; an entanglement
/// pass with seed derive_seed(cfg.seed, t) follows each stage.
template <typename T>
PruneResult<T> iterative_prune(const Tensor<T>& w, const PruneConfig& cfg) {
  cfg.validate();
  const std::size_t n = w.size();
  RetainMask mask(w.shape());
  std::fill(mask.data().begin(), mask.data().end(), std::uint8_t{1});

  PruneResult<T> result;
  std::size_t pruned = 0;
  std::vector<std::size_t> survivors;
  std::vector<double> imp;

  for (std::size_t t = 1; t <= cfg.stages; ++t) {
    const double target_frac = cfg.alpha * static_cast<double>(t) / static_cast<double>(cfg.stages);
    const auto target = static_cast<std::size_t>(std::llround(target_frac * static_cast<double>(n)));

    survivors.clear();
    imp.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) {
        survivors.push_back(i);
        imp.push_back(std::abs(static_cast<double>(w[i])));
      }
    }

    if (target > pruned && survivors.size() > 1) {
      const Tensor<double> probs = softmax_probs(Tensor<double>({imp.size()}, imp));
      const Threshold th = calibrate_threshold_count(probs.data(), target - pruned);
      const RetainMask keep = retain_mask(probs, th);
      for (std::size_t s = 0; s < survivors.size(); ++s) {
        if (!keep[s]) mask[survivors[s]] = 0;
      }
    }

    mask = entangle(mask, cfg.entangle_prob, derive_seed(cfg.seed, t));
    pruned = count_zeros(mask);
    result.per_stage_sparsity.push_back(static_cast<double>(pruned) / static_cast<double>(n));
  }

  result.pruned_weights = w;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) result.pruned_weights[i] = T{};
  }
  result.achieved_sparsity = static_cast<double>(pruned) / static_cast<double>(n);
  result.mask = std::move(mask);
  return result;
}

/// Elementwise w * mask.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& w, const RetainMask& mask) {
  if (w.size() != mask.size()) {
    throw ShapeError("mask " + shape_to_string(mask.shape()) + " does not cover " +
                     shape_to_string(w.shape()));
  }
  Tensor<T> out = w;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) out[i] = T{};
  }
  return out;
}

inline std::size_t mask_popcount(const RetainMask& mask) {
  return mask.size() - count_zeros(mask);
}

}  // namespace weightpress
