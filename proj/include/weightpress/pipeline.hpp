#pragma once

// Per-layer composition of pruning, truncated SVD and annealed factorization,
// plus archive-level bookkeeping.
//
// Stages run in the configured order on the layer viewed as a matrix (4-axis
// tensors are flattened). Pruning yields a retain mask M and zeroes the
// working matrix; decompose replaces it with its rank-r SVD reconstruction;
// factorize fits W1 W2 to it. The stored artifact is whatever the last
// matrix stage produced, with M applied multiplicatively at inference.
//
// Archive naming for a compressed layer `L`:
//   masked_dense  L.pruned, L.mask
//   svd_factors   L.u, L.sigma, L.v   (+ L.mask when pruned)
//   factor_pair   L.w1, L.w2          (+ L.mask when pruned)

#include <atomic>
#include <chrono>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "weightpress/archive.hpp"
#include "weightpress/config.hpp"
#include "weightpress/decompose.hpp"
#include "weightpress/factorize.hpp"
#include "weightpress/linalg.hpp"
#include "weightpress/prune.hpp"
#include "weightpress/random.hpp"
#include "weightpress/report.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

enum class ArtifactKind { passthrough, masked_dense, svd_factors, factor_pair };

inline const char* to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::passthrough: return "passthrough";
    case ArtifactKind::masked_dense: return "masked_dense";
    case ArtifactKind::svd_factors: return "svd_factors";
    case ArtifactKind::factor_pair: return "factor_pair";
  }
  return "?";
}

inline ArtifactKind parse_artifact_kind(const std::string& s) {
  for (auto k : {ArtifactKind::passthrough, ArtifactKind::masked_dense, ArtifactKind::svd_factors,
                 ArtifactKind::factor_pair}) {
    if (s == to_string(k)) return k;
  }
  throw ValueError("unknown artifact kind '" + s + "'");
}

struct CompressedLayer {
  std::string name;
  Shape original_shape;
  ArtifactKind kind = ArtifactKind::passthrough;
  std::optional<RetainMask> mask;      // original shape
  DenseTensor dense;                   // passthrough / masked_dense
  std::optional<SvdFactors<float>> svd;
  std::optional<FactorPair<float>> pair;

  std::size_t params_after() const {
    switch (kind) {
      case ArtifactKind::passthrough: return dense.size();
      case ArtifactKind::masked_dense: return mask ? mask_popcount(*mask) : dense.size();
      case ArtifactKind::svd_factors: return svd->parameter_count();
      case ArtifactKind::factor_pair: return pair->parameter_count();
    }
    return 0;
  }

  /// Weights seen at inference, in the original shape, evaluated in double.
  Tensor<double> effective() const {
    Tensor<double> out;
    switch (kind) {
      case ArtifactKind::passthrough:
      case ArtifactKind::masked_dense:
        out = dense.cast<double>();
        break;
      case ArtifactKind::svd_factors: {
        SvdFactors<double> f{svd->u.cast<double>(), {}, svd->v.cast<double>(), {}};
        f.sigma.assign(svd->sigma.begin(), svd->sigma.end());
        out = reconstruct(f);
        break;
      }
      case ArtifactKind::factor_pair:
        out = matmul(pair->w1.cast<double>(), pair->w2.cast<double>());
        break;
    }
    out = out.reshape(original_shape);
    if (mask) out = apply_mask(out, *mask);
    return out;
  }

  void append_to(TensorArchive& archive) const {
    auto mask_tensor = [&] {
      std::vector<float> bits(mask->size());
      for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (*mask)[i] ? 1.0f : 0.0f;
      return DenseTensor(mask->shape(), std::move(bits));
    };
    switch (kind) {
      case ArtifactKind::passthrough:
        archive.add(name, dense);
        return;
      case ArtifactKind::masked_dense:
        archive.add(name + ".pruned", dense);
        break;
      case ArtifactKind::svd_factors:
        archive.add(name + ".u", svd->u);
        archive.add(name + ".sigma", DenseTensor({svd->sigma.size()}, svd->sigma));
        archive.add(name + ".v", svd->v);
        break;
      case ArtifactKind::factor_pair:
        archive.add(name + ".w1", pair->w1);
        archive.add(name + ".w2", pair->w2);
        break;
    }
    if (mask) archive.add(name + ".mask", mask_tensor());
  }

  /// Rebuilds a layer from the tensors append_to wrote. Missing or
  /// inconsistent tensors raise ShapeError / ValueError.
  static CompressedLayer from_archive(const TensorArchive& archive, const std::string& name,
                                      ArtifactKind kind, const Shape& original_shape) {
    CompressedLayer layer;
    layer.name = name;
    layer.kind = kind;
    layer.original_shape = original_shape;
    const std::size_t numel = shape_numel(original_shape);
    if (kind != ArtifactKind::passthrough && archive.contains(name + ".mask")) {
      const DenseTensor& m = archive.at(name + ".mask");
      if (m.shape() != original_shape) throw ShapeError("mask shape differs from layer shape");
      RetainMask mask(m.shape());
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] != 0.0f && m[i] != 1.0f) throw ValueError("mask of '" + name + "' is not binary");
        mask[i] = m[i] != 0.0f ? 1 : 0;
      }
      layer.mask = std::move(mask);
    }
    switch (kind) {
      case ArtifactKind::passthrough:
        layer.dense = archive.at(name);
        break;
      case ArtifactKind::masked_dense:
        layer.dense = archive.at(name + ".pruned");
        if (layer.dense.shape() != original_shape) throw ShapeError("pruned tensor shape differs");
        break;
      case ArtifactKind::svd_factors: {
        SvdFactors<float> f;
        f.u = archive.at(name + ".u");
        f.v = archive.at(name + ".v");
        const auto& s = archive.at(name + ".sigma");
        f.sigma.assign(s.data().begin(), s.data().end());
        f.original_shape = original_shape;
        if (f.u.ndim() != 2 || f.v.ndim() != 2 || f.u.cols() != f.sigma.size() ||
            f.v.cols() != f.sigma.size() || f.u.rows() * f.v.rows() != numel) {
          throw ShapeError("svd factors of '" + name + "' are inconsistent");
        }
        layer.svd = std::move(f);
        break;
      }
      case ArtifactKind::factor_pair: {
        FactorPair<float> p;
        p.w1 = archive.at(name + ".w1");
        p.w2 = archive.at(name + ".w2");
        if (p.w1.ndim() != 2 || p.w2.ndim() != 2 || p.w1.cols() != p.w2.rows() ||
            p.w1.rows() * p.w2.cols() != numel) {
          throw ShapeError("factor pair of '" + name + "' is inconsistent");
        }
        layer.pair = std::move(p);
        break;
      }
    }
    return layer;
  }
};

/// ||W - effective||_F / ||W||_F (absolute when W is zero).
inline double relative_error(const DenseTensor& w, const CompressedLayer& layer) {
  const double err = std::sqrt(squared_distance(w, layer.effective()));
  const double norm = frobenius_norm(w);
  return norm > 0.0 ? err / norm : err;
}

namespace detail {

// Re-raises the in-flight exception with the layer name prefixed, keeping its type.
[[noreturn]] inline void rethrow_with_layer(const std::string& layer) {
  const std::string prefix = "layer '" + layer + "': ";
  try {
    throw;
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what(), e.iteration());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ValueError& e) {
    throw ValueError(prefix + e.what());
  }
}

}  // namespace detail

/// Runs cfg.stage_list on one layer. Layer seeds are the configured seeds
/// xor fnv1a64(layer name).
inline std::pair<CompressedLayer, LayerReport> compress_layer(const DenseTensor& w,
                                                              const LayerConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  CompressedLayer layer;
  layer.name = cfg.layer_name;
  layer.original_shape = w.shape();
  double achieved_sparsity = 0.0;
  try {
    cfg.validate();
    if (w.ndim() != 2 && w.ndim() != 4) {
      throw ShapeError("expected a 2- or 4-axis tensor, got " + shape_to_string(w.shape()));
    }
    Tensor<double> cur = as_matrix(w).cast<double>();
    layer.kind = ArtifactKind::masked_dense;

    for (Stage stage : cfg.stage_list) {
      switch (stage) {
        case Stage::prune: {
          PruneConfig pc = cfg.prune;
          pc.seed = layer_seed(pc.seed, cfg.layer_name);
          auto res = iterative_prune(cur.reshape(w.shape()), pc);
          achieved_sparsity = res.achieved_sparsity;
          layer.mask = std::move(res.mask);
          cur = res.pruned_weights.reshape(cur.shape());
          break;
        }
        case Stage::decompose: {
          const auto f = decompose(cur, *cfg.rank_svd);
          SvdFactors<float> stored{f.u.cast<float>(), {}, f.v.cast<float>(), w.shape()};
          stored.sigma.assign(f.sigma.begin(), f.sigma.end());
          layer.svd = std::move(stored);
          layer.pair.reset();
          layer.kind = ArtifactKind::svd_factors;
          cur = reconstruct(SvdFactors<double>{f.u, f.sigma, f.v, cur.shape()});
          break;
        }
        case Stage::factorize: {
          AnnealConfig ac = cfg.anneal;
          ac.seed = layer_seed(ac.seed, cfg.layer_name);
          auto p = anneal_factorize(cur, ac);
          FactorPair<float> stored;
          stored.w1 = p.w1.cast<float>();
          stored.w2 = p.w2.cast<float>();
          stored.final_loss = p.final_loss;
          stored.loss_trace = std::move(p.loss_trace);
          cur = matmul(p.w1, p.w2);
          layer.pair = std::move(stored);
          layer.svd.reset();
          layer.kind = ArtifactKind::factor_pair;
          break;
        }
      }
    }
    if (layer.kind == ArtifactKind::masked_dense) {
      layer.dense = layer.mask ? apply_mask(w, *layer.mask) : w;
    }
  } catch (const Error&) {
    detail::rethrow_with_layer(cfg.layer_name);
  }

  LayerReport row;
  row.layer_name = cfg.layer_name;
  row.artifact = to_string(layer.kind);
  row.shape = w.shape();
  row.params_before = w.size();
  row.params_after = layer.params_after();
  row.ratio = row.params_after ? static_cast<double>(row.params_before) / static_cast<double>(row.params_after) : 0.0;
  row.recon_error_rel = relative_error(w, layer);
  row.mask_bits = layer.mask ? layer.mask->size() : 0;
  row.achieved_sparsity = achieved_sparsity;
  row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(layer), std::move(row)};
}

struct CompressionOutput {
  TensorArchive archive;
  CompressionReport report;
};

/// Compresses every configured layer; the rest pass through bit-identically.
/// Layers run on up to `jobs` threads; results do not depend on `jobs`.
inline CompressionOutput compress_archive(const TensorArchive& input, const PipelineConfig& config,
                                          std::size_t jobs = 1) {
  std::vector<std::string> missing;
  for (const auto& [name, _] : config.layers()) {
    if (!input.contains(name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("configured layers not found in archive: " + list);
  }

  const auto& entries = input.entries();
  std::vector<std::optional<LayerConfig>> configs(entries.size());
  json echo = json::object();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (config.names(entries[i].first)) {
      configs[i] = config.resolve(entries[i].first);
      echo[entries[i].first] = to_json(*configs[i]);
    }
  }

  std::vector<std::optional<std::pair<CompressedLayer, LayerReport>>> results(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      if (!configs[i]) continue;
      try {
        results[i] = compress_layer(entries[i].second, *configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CompressionOutput out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = entries[i];
    if (results[i]) {
      results[i]->first.append_to(out.archive);
      out.report.per_layer.push_back(std::move(results[i]->second));
    } else {
      out.archive.add(name, tensor);
      LayerReport row;
      row.layer_name = name;
      row.artifact = to_string(ArtifactKind::passthrough);
      row.shape = tensor.shape();
      row.params_before = row.params_after = tensor.size();
      out.report.per_layer.push_back(std::move(row));
    }
  }
  out.report.recompute_totals();
  out.report.config_echo = std::move(echo);
  return out;
}

}  // namespace weightpress
