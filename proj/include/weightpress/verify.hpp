#pragma once

// Independent re-check of a compression report against the original and
// compressed archives. Every count is recomputed from tensor shapes and mask
// popcounts; errors are recomputed from the stored artifacts.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "weightpress/archive.hpp"
#include "weightpress/error.hpp"
#include "weightpress/pipeline.hpp"

namespace weightpress {

struct VerifyTolerance {
  double ratio_rel = 1e-9;
  double error_abs = 1e-6;
  double error_rel = 1e-6;
};

struct VerifySummary {
  std::size_t layers_checked = 0;
  std::size_t params_before_total = 0;
  std::size_t params_after_total = 0;
  double total_ratio = 1.0;
};

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw VerificationError(path + "." + key, "report is missing " + path + "." + key);
  }
  return obj.at(key);
}

template <typename V>
V field_as(const json& obj, const char* key, const std::string& path) {
  const json& v = field(obj, key, path);
  try {
    return v.get<V>();
  } catch (const json::exception&) {
    throw VerificationError(path + "." + key, path + "." + key + " has the wrong type");
  }
}

inline bool close_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

/// Throws VerificationError naming the first field that disagrees.
inline VerifySummary verify_report(const TensorArchive& original, const TensorArchive& compressed,
                                   const json& report, const VerifyTolerance& tol = {}) {
  using detail::field_as;
  if (field_as<std::string>(report, "format", "report") != kReportFormat) {
    throw VerificationError("report.format", "not a weightpress report");
  }
  const json& layers = detail::field(report, "layers", "report");
  if (!layers.is_array()) throw VerificationError("report.layers", "report.layers is not an array");

  VerifySummary sum;
  std::set<std::string> seen;
  std::set<std::string> used_tensors;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& row = layers[i];
    const std::string path = "layers[" + std::to_string(i) + "]";
    const auto name = field_as<std::string>(row, "layer_name", path);
    const std::string where = path + " ('" + name + "')";
    if (!seen.insert(name).second) throw VerificationError(path + ".layer_name", "layer listed twice: " + name);
    const DenseTensor* orig = original.find(name);
    if (!orig) throw VerificationError(path + ".layer_name", "layer not in original archive: " + name);

    ArtifactKind kind;
    try {
      kind = parse_artifact_kind(field_as<std::string>(row, "artifact", path));
    } catch (const ValueError& e) {
      throw VerificationError(path + ".artifact", e.what());
    }

    if (field_as<Shape>(row, "shape", path) != orig->shape()) {
      throw VerificationError(path + ".shape", where + ": shape differs from original");
    }
    const auto before = field_as<std::size_t>(row, "params_before", path);
    if (before != orig->size()) {
      throw VerificationError(path + ".params_before",
                              where + ": params_before " + std::to_string(before) + " != " +
                                  std::to_string(orig->size()));
    }

    CompressedLayer layer;
    try {
      layer = CompressedLayer::from_archive(compressed, name, kind, orig->shape());
    } catch (const Error& e) {
      throw VerificationError(path + ".artifact", where + ": " + e.what());
    }
    for (const char* suffix : {"", ".pruned", ".mask", ".u", ".sigma", ".v", ".w1", ".w2"}) {
      const std::string t = name + suffix;
      if (compressed.contains(t) && ((kind == ArtifactKind::passthrough) == (t == name))) used_tensors.insert(t);
    }
    if (kind == ArtifactKind::passthrough) {
      const auto a = orig->data();
      const auto b = layer.dense.data();
      if (layer.dense.shape() != orig->shape() ||
          !std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
            return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
          })) {
        throw VerificationError(path + ".artifact", where + ": pass-through tensor was modified");
      }
    }

    const std::size_t after = layer.params_after();
    if (field_as<std::size_t>(row, "params_after", path) != after) {
      throw VerificationError(path + ".params_after",
                              where + ": params_after should be " + std::to_string(after));
    }
    const double ratio = static_cast<double>(before) / static_cast<double>(after);
    if (!detail::close_rel(field_as<double>(row, "ratio", path), ratio, tol.ratio_rel)) {
      throw VerificationError(path + ".ratio", where + ": ratio should be " + std::to_string(ratio));
    }
    const std::size_t mask_bits = layer.mask ? layer.mask->size() : 0;
    if (field_as<std::size_t>(row, "mask_bits", path) != mask_bits) {
      throw VerificationError(path + ".mask_bits", where + ": mask_bits should be " + std::to_string(mask_bits));
    }
    const double err = relative_error(*orig, layer);
    const double reported = field_as<double>(row, "recon_error_rel", path);
    if (!(std::abs(reported - err) <= tol.error_abs + tol.error_rel * err)) {
      throw VerificationError(path + ".recon_error_rel",
                              where + ": recon_error_rel should be " + std::to_string(err));
    }
    sum.params_before_total += before;
    sum.params_after_total += after;
    ++sum.layers_checked;
  }

  for (const auto& [name, _] : original.entries()) {
    if (!seen.count(name)) throw VerificationError("layers", "original layer missing from report: " + name);
  }
  for (const auto& [name, _] : compressed.entries()) {
    if (!used_tensors.count(name)) {
      throw VerificationError("layers", "compressed archive tensor not described by report: " + name);
    }
  }

  if (field_as<std::size_t>(report, "params_before_total", "report") != sum.params_before_total) {
    throw VerificationError("params_before_total", "params_before_total should be " +
                                                       std::to_string(sum.params_before_total));
  }
  if (field_as<std::size_t>(report, "params_after_total", "report") != sum.params_after_total) {
    throw VerificationError("params_after_total", "params_after_total should be " +
                                                      std::to_string(sum.params_after_total));
  }
  sum.total_ratio = sum.params_after_total == 0
                        ? 1.0
                        : static_cast<double>(sum.params_before_total) /
                              static_cast<double>(sum.params_after_total);
  if (!detail::close_rel(field_as<double>(report, "total_ratio", "report"), sum.total_ratio, tol.ratio_rel)) {
    throw VerificationError("total_ratio", "total_ratio should be " + std::to_string(sum.total_ratio));
  }
  return sum;
}

}  // namespace weightpress
