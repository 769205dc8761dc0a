#pragma once

// Pipeline configuration and its JSON form.
//
//   {
//     "defaults": {
//       "pipeline": ["prune", "decompose", "factorize"],
//       "prune":    {"alpha": 0.1417, "stages": 3, "entangle_prob": 0.05, "seed": 1},
//       "rank_svd": 41,
//       "anneal":   {"rank": 41, "init_scale": 0.1, "eta0": 0.01, "decay": 0.999,
//                    "max_iters": 2000, "rel_tol": 1e-7, "seed": 2}
//     },
//     "layers": {"conv1": {"prune": {"alpha": 0.25}}, "fc": {}}
//   }
//
// Only layers listed under "layers" are compressed; each entry is a JSON merge
// patch applied to "defaults". Unknown keys are rejected.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "weightpress/error.hpp"
#include "weightpress/factorize.hpp"
#include "weightpress/prune.hpp"

namespace weightpress {

using json = nlohmann::json;

enum class Stage { prune, decompose, factorize };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::prune: return "prune";
    case Stage::decompose: return "decompose";
    case Stage::factorize: return "factorize";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "prune") return Stage::prune;
  if (s == "decompose") return Stage::decompose;
  if (s == "factorize") return Stage::factorize;
  throw ConfigError("unknown pipeline stage '" + s + "'");
}

struct LayerConfig {
  std::string layer_name;
  std::vector<Stage> stage_list{Stage::prune, Stage::decompose, Stage::factorize};
  PruneConfig prune;
  std::optional<std::size_t> rank_svd;
  AnnealConfig anneal;

  bool has(Stage s) const {
    return std::find(stage_list.begin(), stage_list.end(), s) != stage_list.end();
  }

  void validate() const {
    if (stage_list.empty()) throw ConfigError("layer '" + layer_name + "': empty pipeline");
    std::set<Stage> seen(stage_list.begin(), stage_list.end());
    if (seen.size() != stage_list.size()) {
      throw ConfigError("layer '" + layer_name + "': duplicate pipeline stage");
    }
    try {
      if (has(Stage::prune)) prune.validate();
      if (has(Stage::factorize)) anneal.validate();
    } catch (const ValueError& e) {
      throw ConfigError("layer '" + layer_name + "': " + e.what());
    }
    if (has(Stage::decompose) && (!rank_svd || *rank_svd < 1)) {
      throw ConfigError("layer '" + layer_name + "': decompose needs rank_svd >= 1");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename V>
V get_number(const json& obj, const char* key, const std::string& where) {
  const json& v = obj.at(key);
  if constexpr (std::is_integral_v<V>) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(where + "." + key + " must be a non-negative integer");
    }
  } else if (!v.is_number()) {
    throw ConfigError(where + "." + key + " must be a number");
  }
  return v.get<V>();
}

}  // namespace detail

/// Builds a LayerConfig from an already merged JSON object.
inline LayerConfig layer_config_from_json(const std::string& name, const json& j) {
  const std::string where = "layer '" + name + "'";
  detail::reject_unknown_keys(j, {"pipeline", "prune", "rank_svd", "anneal"}, where);
  LayerConfig cfg;
  cfg.layer_name = name;
  if (j.contains("pipeline")) {
    if (!j["pipeline"].is_array()) throw ConfigError(where + ".pipeline must be an array");
    cfg.stage_list.clear();
    for (const auto& s : j["pipeline"]) {
      if (!s.is_string()) throw ConfigError(where + ".pipeline entries must be strings");
      cfg.stage_list.push_back(parse_stage(s.get<std::string>()));
    }
  }
  if (j.contains("rank_svd")) cfg.rank_svd = detail::get_number<std::size_t>(j, "rank_svd", where);

  const json prune = j.value("prune", json::object());
  detail::reject_unknown_keys(prune, {"alpha", "stages", "entangle_prob", "seed"}, where + ".prune");
  if (cfg.has(Stage::prune)) {
    for (const char* required : {"alpha", "entangle_prob"}) {
      if (!prune.contains(required)) {
        throw ConfigError(where + ": prune." + required + " is required");
      }
    }
  }
  if (prune.contains("alpha")) cfg.prune.alpha = detail::get_number<double>(prune, "alpha", where);
  if (prune.contains("stages")) cfg.prune.stages = detail::get_number<std::size_t>(prune, "stages", where);
  if (prune.contains("entangle_prob")) {
    cfg.prune.entangle_prob = detail::get_number<double>(prune, "entangle_prob", where);
  }
  if (prune.contains("seed")) cfg.prune.seed = detail::get_number<std::uint64_t>(prune, "seed", where);

  const json anneal = j.value("anneal", json::object());
  detail::reject_unknown_keys(
      anneal, {"rank", "init_scale", "eta0", "decay", "max_iters", "rel_tol", "seed"}, where + ".anneal");
  if (anneal.contains("rank")) {
    cfg.anneal.rank = detail::get_number<std::size_t>(anneal, "rank", where);
  } else if (cfg.rank_svd) {
    cfg.anneal.rank = *cfg.rank_svd;
  } else if (cfg.has(Stage::factorize)) {
    throw ConfigError(where + ": factorize needs anneal.rank or rank_svd");
  }
  if (anneal.contains("init_scale")) cfg.anneal.init_scale = detail::get_number<double>(anneal, "init_scale", where);
  if (anneal.contains("eta0")) cfg.anneal.eta0 = detail::get_number<double>(anneal, "eta0", where);
  if (anneal.contains("decay")) cfg.anneal.decay = detail::get_number<double>(anneal, "decay", where);
  if (anneal.contains("max_iters")) cfg.anneal.max_iters = detail::get_number<std::size_t>(anneal, "max_iters", where);
  if (anneal.contains("rel_tol")) cfg.anneal.rel_tol = detail::get_number<double>(anneal, "rel_tol", where);
  if (anneal.contains("seed")) cfg.anneal.seed = detail::get_number<std::uint64_t>(anneal, "seed", where);

  cfg.validate();
  return cfg;
}

/// Fully resolved configuration, echoed into reports.
inline json to_json(const LayerConfig& cfg) {
  json j;
  j["pipeline"] = json::array();
  for (Stage s : cfg.stage_list) j["pipeline"].push_back(to_string(s));
  if (cfg.has(Stage::prune)) {
    j["prune"] = {{"alpha", cfg.prune.alpha},
                  {"stages", cfg.prune.stages},
                  {"entangle_prob", cfg.prune.entangle_prob},
                  {"seed", cfg.prune.seed}};
  }
  if (cfg.rank_svd) j["rank_svd"] = *cfg.rank_svd;
  if (cfg.has(Stage::factorize)) {
    json a = {{"rank", cfg.anneal.rank},
              {"decay", cfg.anneal.decay},
              {"max_iters", cfg.anneal.max_iters},
              {"rel_tol", cfg.anneal.rel_tol},
              {"seed", cfg.anneal.seed}};
    if (cfg.anneal.init_scale) a["init_scale"] = *cfg.anneal.init_scale;
    if (cfg.anneal.eta0) a["eta0"] = *cfg.anneal.eta0;
    j["anneal"] = std::move(a);
  }
  return j;
}

class PipelineConfig {
 public:
  PipelineConfig() = default;

  static PipelineConfig from_json(const json& doc) {
    detail::reject_unknown_keys(doc, {"defaults", "layers"}, "config");
    PipelineConfig cfg;
    cfg.defaults_ = doc.value("defaults", json::object());
    if (!cfg.defaults_.is_object()) throw ConfigError("config.defaults must be an object");
    const json layers = doc.value("layers", json::object());
    if (!layers.is_object()) throw ConfigError("config.layers must be an object");
    // json objects iterate in sorted key order, which fixes the layer order.
    for (const auto& [name, patch] : layers.items()) {
      if (!patch.is_object() && !patch.is_null()) {
        throw ConfigError("override for layer '" + name + "' must be an object");
      }
      cfg.layers_.emplace_back(name, patch.is_null() ? json::object() : patch);
    }
    return cfg;
  }

  static PipelineConfig parse(const std::string& text) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(doc);
  }

  void set_defaults(json defaults) { defaults_ = std::move(defaults); }
  void add_layer(std::string name, json overrides = json::object()) {
    layers_.emplace_back(std::move(name), std::move(overrides));
  }
  void set_seed_override(std::optional<std::uint64_t> seed) { seed_override_ = seed; }

  const std::vector<std::pair<std::string, json>>& layers() const noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }

  bool names(const std::string& layer) const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [&](const auto& e) { return e.first == layer; });
  }

  LayerConfig resolve(const std::string& layer) const {
    for (const auto& [name, patch] : layers_) {
      if (name != layer) continue;
      json merged = defaults_;
      merged.merge_patch(patch);
      LayerConfig cfg = layer_config_from_json(name, merged);
      if (seed_override_) {
        cfg.prune.seed = *seed_override_;
        cfg.anneal.seed = *seed_override_;
      }
      return cfg;
    }
    throw ConfigError("layer '" + layer + "' is not configured");
  }

 private:
  json defaults_ = json::object();
  std::vector<std::pair<std::string, json>> layers_;
  std::optional<std::uint64_t> seed_override_;
};

}  // namespace weightpress
