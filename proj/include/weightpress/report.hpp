#pragma once

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weightpress/tensor.hpp"

namespace weightpress {

using json = nlohmann::json;

inline constexpr const char* kReportFormat = "weightpress-report";
inline constexpr int kReportVersion = 1;

struct LayerReport {
  std::string layer_name;
  std::string artifact;  // passthrough | masked_dense | svd_factors | factor_pair
  Shape shape;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  double ratio = 1.0;
  double recon_error_rel = 0.0;
  std::size_t mask_bits = 0;  // storage of the retain mask, not counted in ratio
  double achieved_sparsity = 0.0;
  double wall_time_s = 0.0;
};

struct CompressionReport {
  std::vector<LayerReport> per_layer;
  std::size_t params_before_total = 0;
  std::size_t params_after_total = 0;
  double total_ratio = 1.0;
  json config_echo = json::object();

  void recompute_totals() {
    params_before_total = 0;
    params_after_total = 0;
    for (const auto& row : per_layer) {
      params_before_total += row.params_before;
      params_after_total += row.params_after;
    }
    // An empty archive is a no-op compression.
    total_ratio = params_after_total == 0
                      ? (params_before_total == 0 ? 1.0 : 0.0)
                      : static_cast<double>(params_before_total) / static_cast<double>(params_after_total);
  }
};

/// JSON form of a report. Wall times are excluded unless requested so that
/// identical runs serialize to identical bytes.
inline json to_json(const CompressionReport& r, bool include_timings = false) {
  json layers = json::array();
  for (const auto& row : r.per_layer) {
    json j = {{"layer_name", row.layer_name},
              {"artifact", row.artifact},
              {"shape", row.shape},
              {"params_before", row.params_before},
              {"params_after", row.params_after},
              {"ratio", row.ratio},
              {"recon_error_rel", row.recon_error_rel},
              {"mask_bits", row.mask_bits},
              {"achieved_sparsity", row.achieved_sparsity}};
    if (include_timings) j["wall_time_s"] = row.wall_time_s;
    layers.push_back(std::move(j));
  }
  return {{"format", kReportFormat},
          {"version", kReportVersion},
          {"layers", std::move(layers)},
          {"params_before_total", r.params_before_total},
          {"params_after_total", r.params_after_total},
          {"total_ratio", r.total_ratio},
          {"config", r.config_echo}};
}

inline std::string format_ratio(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f×", ratio);
  return buf;
}

inline void print_report_table(std::ostream& os, const CompressionReport& r) {
  os << std::left << std::setw(24) << "layer" << std::setw(14) << "artifact" << std::right
     << std::setw(12) << "before" << std::setw(12) << "after" << std::setw(10) << "ratio"
     << std::setw(12) << "rel.err" << std::setw(10) << "mask" << std::setw(10) << "time[s]"
     << '\n';
  for (const auto& row : r.per_layer) {
    std::ostringstream err, t;
    err << std::scientific << std::setprecision(2) << row.recon_error_rel;
    t << std::fixed << std::setprecision(3) << row.wall_time_s;
    // The multiplication sign is two bytes in UTF-8, so pad one extra.
    os << std::left << std::setw(24) << row.layer_name << std::setw(14) << row.artifact
       << std::right << std::setw(12) << row.params_before << std::setw(12) << row.params_after
       << std::setw(11) << format_ratio(row.ratio) << std::setw(12) << err.str()
       << std::setw(10) << row.mask_bits << std::setw(10) << t.str() << '\n';
  }
  os << "total: " << r.params_before_total << " -> " << r.params_after_total
     << " parameters, ratio " << format_ratio(r.total_ratio) << '\n';
}

}  // namespace weightpress
