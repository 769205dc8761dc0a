#pragma once

// `weightpress` command-line front end. run() is callable in-process so every
// command path can be exercised from tests.
//
// Exit codes: 0 ok, 1 internal, 2 config/usage, 3 I/O or format, 4 verification.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "weightpress/archive.hpp"
#include "weightpress/bench.hpp"
#include "weightpress/config.hpp"
#include "weightpress/decompose.hpp"
#include "weightpress/error.hpp"
#include "weightpress/linalg.hpp"
#include "weightpress/pipeline.hpp"
#include "weightpress/random.hpp"
#include "weightpress/verify.hpp"

namespace weightpress::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kIo = 3,
  kMismatch = 4,
};

struct LayerSpec {
  std::string name;
  Shape shape;
  std::optional<std::size_t> rank;
};

/// Parses NAME=D0xD1x...[@RANK], e.g. "conv1=16x8x3x3@4".
inline LayerSpec parse_layer_spec(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("layer spec '" + text + "' must look like NAME=16x8x3x3[@RANK]");
  }
  LayerSpec spec;
  spec.name = text.substr(0, eq);
  std::string dims = text.substr(eq + 1);
  if (const auto at = dims.find('@'); at != std::string::npos) {
    try {
      spec.rank = std::stoul(dims.substr(at + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad rank in layer spec '" + text + "'");
    }
    dims = dims.substr(0, at);
  }
  std::stringstream ss(dims);
  for (std::string d; std::getline(ss, d, 'x');) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(d, &used);
      if (used != d.size() || v == 0) throw std::invalid_argument(d);
      spec.shape.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad dimension '" + d + "' in layer spec '" + text + "'");
    }
  }
  if (spec.shape.empty()) throw ConfigError("layer spec '" + text + "' has no dimensions");
  if (spec.rank) {
    const std::size_t m = spec.shape[0];
    const std::size_t n = shape_numel(spec.shape) / m;
    if (*spec.rank < 1 || *spec.rank > std::min(m, n)) {
      throw ConfigError("rank of '" + spec.name + "' must lie in [1, min(m, n)]");
    }
  }
  return spec;
}

/// Seeded synthetic weights. Each layer draws from its own stream
/// (seed ^ fnv1a64(name)), so adding layers leaves the others unchanged.
/// With a rank, the matrix view is a product of Gaussian m x r and r x n factors.
inline DenseTensor generate_layer(const LayerSpec& spec, std::uint64_t seed) {
  Rng rng(layer_seed(seed, spec.name));
  const std::size_t m = spec.shape[0];
  const std::size_t n = shape_numel(spec.shape) / m;
  if (!spec.rank) {
    DenseTensor t(spec.shape);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : t.data()) v = static_cast<float>(scale * rng.normal());
    return t;
  }
  const std::size_t r = *spec.rank;
  Tensor<double> a = Tensor<double>::matrix(m, r), b = Tensor<double>::matrix(r, n);
  for (auto& v : a.data()) v = rng.normal();
  const double scale = 1.0 / std::sqrt(static_cast<double>(r * n));
  for (auto& v : b.data()) v = scale * rng.normal();
  return matmul(a, b).cast<float>().reshape(spec.shape);
}

inline TensorArchive generate_archive(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  TensorArchive archive;
  for (const auto& s : specs) archive.add(s.name, generate_layer(s, seed));
  return archive;
}

inline BenchSize parse_bench_size(const std::string& text) {
  std::stringstream ss(text);
  std::vector<std::size_t> v;
  for (std::string d; std::getline(ss, d, 'x');) {
    try {
      v.push_back(std::stoul(d));
    } catch (const std::exception&) {
      throw ConfigError("bad bench size '" + text + "'");
    }
  }
  if (v.size() != 3) throw ConfigError("bench size '" + text + "' must be MxNxR");
  return {v[0], v[1], v[2]};
}

namespace detail {

inline std::string read_text(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct Failure {
  int code;
  std::string kind;
};

inline Failure classify(const std::exception& e) {
  if (dynamic_cast<const VerificationError*>(&e)) return {kMismatch, "verification"};
  if (dynamic_cast<const FormatError*>(&e)) return {kIo, "format"};
  if (dynamic_cast<const IoError*>(&e)) return {kIo, "io"};
  if (dynamic_cast<const ConfigError*>(&e)) return {kConfig, "config"};
  if (dynamic_cast<const ValueError*>(&e)) return {kConfig, "value"};
  if (dynamic_cast<const ShapeError*>(&e)) return {kConfig, "shape"};
  if (dynamic_cast<const DivergenceError*>(&e)) return {kInternal, "divergence"};
  return {kInternal, "internal"};
}

}  // namespace detail

struct Options {
  bool json = false;
  int verbosity = 0;

  // compress
  std::string input, config, output, report;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  bool timings = false;

  // verify
  std::string original, compressed;

  // bench
  std::vector<std::string> sizes;
  std::vector<std::string> variants;
  std::size_t reps = 50, warmup = 5;
  double mask_alpha = 0.5;
  std::string bench_out;

  // gen
  std::vector<std::string> layers;
};

inline int cmd_compress(const Options& o, std::ostream& out, std::ostream& err) {
  const TensorArchive input = load_archive(o.input);
  PipelineConfig cfg = PipelineConfig::parse(detail::read_text(o.config));
  cfg.set_seed_override(o.seed);
  if (o.verbosity > 0) {
    err << "compressing " << cfg.layers().size() << " of " << input.size() << " tensors with "
        << o.jobs << " job(s)\n";
  }
  const CompressionOutput result = compress_archive(input, cfg, o.jobs);
  save_archive(o.output, result.archive);
  const std::string report_path = o.report.empty() ? o.output + ".report.json" : o.report;
  const json report = to_json(result.report, o.timings);
  detail::write_text(report_path, report.dump(2) + "\n");
  if (o.json) {
    out << report.dump(2) << '\n';
  } else {
    print_report_table(out, result.report);
    out << "wrote " << o.output << " and " << report_path << '\n';
  }
  return kOk;
}

inline int cmd_inspect(const Options& o, std::ostream& out, std::ostream&) {
  const TensorArchive archive = load_archive(o.input);
  json rows = json::array();
  std::size_t total = 0;
  for (const auto& [name, t] : archive.entries()) {
    const double sparsity = static_cast<double>(count_zeros(t)) / static_cast<double>(t.size());
    rows.push_back({{"name", name},
                    {"shape", t.shape()},
                    {"params", t.size()},
                    {"frobenius_norm", frobenius_norm(t)},
                    {"sparsity", sparsity}});
    total += t.size();
  }
  if (o.json) {
    out << json{{"tensors", rows}, {"total_params", total}}.dump(2) << '\n';
    return kOk;
  }
  out << std::left << std::setw(28) << "name" << std::setw(20) << "shape" << std::right
      << std::setw(12) << "params" << std::setw(14) << "frobenius" << std::setw(10) << "sparsity"
      << '\n';
  for (const auto& r : rows) {
    std::ostringstream norm, sp;
    norm << std::setprecision(6) << r["frobenius_norm"].get<double>();
    sp << std::fixed << std::setprecision(4) << r["sparsity"].get<double>();
    out << std::left << std::setw(28) << r["name"].get<std::string>() << std::setw(20)
        << shape_to_string(r["shape"].get<Shape>()) << std::right << std::setw(12)
        << r["params"].get<std::size_t>() << std::setw(14) << norm.str() << std::setw(10)
        << sp.str() << '\n';
  }
  out << "total: " << archive.size() << " tensors, " << total << " parameters\n";
  return kOk;
}

inline int cmd_verify(const Options& o, std::ostream& out, std::ostream&) {
  const TensorArchive original = load_archive(o.original);
  const TensorArchive compressed = load_archive(o.compressed);
  json report;
  try {
    report = json::parse(detail::read_text(o.report));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  const VerifySummary s = verify_report(original, compressed, report);
  if (o.json) {
    out << json{{"ok", true},
                {"layers_checked", s.layers_checked},
                {"params_before_total", s.params_before_total},
                {"params_after_total", s.params_after_total},
                {"total_ratio", s.total_ratio}}
               .dump(2)
        << '\n';
  } else {
    out << "verified " << s.layers_checked << " layers: " << s.params_before_total << " -> "
        << s.params_after_total << " parameters, ratio " << format_ratio(s.total_ratio) << '\n';
  }
  return kOk;
}

inline int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  BenchSpec spec;
  for (const auto& s : o.sizes) spec.sizes.push_back(parse_bench_size(s));
  if (spec.sizes.empty()) spec.sizes.push_back({1024, 1024, 64});
  if (!o.variants.empty()) {
    spec.variants.clear();
    for (const auto& v : o.variants) spec.variants.push_back(parse_variant(v));
  }
  spec.reps = o.reps;
  spec.warmup = o.warmup;
  spec.mask_alpha = o.mask_alpha;
  spec.seed = o.seed.value_or(0);
  if (o.verbosity > 0) err << "benchmarking " << spec.sizes.size() << " size(s)\n";
  const auto results = run_bench(spec);
  const json j = to_json(results);
  if (!o.bench_out.empty()) detail::write_text(o.bench_out, j.dump(2) + "\n");
  if (o.json) {
    out << j.dump(2) << '\n';
    return kOk;
  }
  out << std::left << std::setw(10) << "variant" << std::right << std::setw(7) << "m"
      << std::setw(7) << "n" << std::setw(6) << "r" << std::setw(14) << "flops" << std::setw(14)
      << "median[ns]" << std::setw(14) << "p10[ns]" << std::setw(14) << "p90[ns]" << std::setw(10)
      << "speedup" << '\n';
  for (const auto& b : results) {
    std::ostringstream sp;
    sp << std::fixed << std::setprecision(2) << b.speedup_vs_dense << 'x';
    out << std::left << std::setw(10) << to_string(b.variant) << std::right << std::setw(7) << b.m
        << std::setw(7) << b.n << std::setw(6) << b.r << std::setw(14) << b.flops_model
        << std::setw(14) << static_cast<long long>(b.median_ns) << std::setw(14)
        << static_cast<long long>(b.p10_ns) << std::setw(14) << static_cast<long long>(b.p90_ns)
        << std::setw(10) << sp.str() << '\n';
  }
  return kOk;
}

inline int cmd_gen(const Options& o, std::ostream& out, std::ostream&) {
  std::vector<LayerSpec> specs;
  for (const auto& l : o.layers) specs.push_back(parse_layer_spec(l));
  const TensorArchive archive = generate_archive(specs, o.seed.value_or(0));
  save_archive(o.output, archive);
  if (o.json) {
    out << json{{"output", o.output}, {"tensors", archive.size()}}.dump(2) << '\n';
  } else {
    out << "wrote " << archive.size() << " tensors to " << o.output << '\n';
  }
  return kOk;
}

/// Runs one command. `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Compress dense weight tensors by pruning, truncated SVD and annealed factorization",
               "weightpress"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_flag("--json", o.json, "Machine-readable output on stdout");
  app.add_flag("-v,--verbose", o.verbosity, "Progress messages on stderr");

  auto* compress = app.add_subcommand("compress", "Compress configured layers of an archive");
  compress->add_option("input", o.input, "Input QTNS archive")->required();
  compress->add_option("config", o.config, "Pipeline config (JSON)")->required();
  compress->add_option("output", o.output, "Output QTNS archive")->required();
  compress->add_option("--report", o.report, "Report path (default: OUTPUT.report.json)");
  compress->add_option("-j,--jobs", o.jobs, "Layers compressed in parallel")->check(CLI::PositiveNumber);
  compress->add_option("--seed", o.seed, "Override every seed in the config");
  compress->add_flag("--timings", o.timings, "Include wall times in the report file");

  auto* inspect = app.add_subcommand("inspect", "List tensors of an archive");
  inspect->add_option("archive", o.input, "QTNS archive")->required();

  auto* verify = app.add_subcommand("verify", "Re-check a report against its archives");
  verify->add_option("original", o.original, "Original archive")->required();
  verify->add_option("compressed", o.compressed, "Compressed archive")->required();
  verify->add_option("report", o.report, "Report JSON")->required();

  auto* bench = app.add_subcommand("bench", "Time dense, masked and factored matvec");
  bench->add_option("--size", o.sizes, "MxNxR, repeatable (default 1024x1024x64)");
  bench->add_option("--variants", o.variants, "Subset of dense,masked,factored")->delimiter(',');
  bench->add_option("--reps", o.reps, "Timed repetitions (>= 30)");
  bench->add_option("--warmup", o.warmup, "Discarded warmup calls (>= 5)");
  bench->add_option("--alpha", o.mask_alpha, "Pruned fraction for the masked variant");
  bench->add_option("--seed", o.seed, "Input seed");
  bench->add_option("--out", o.bench_out, "Write results JSON here");

  auto* gen = app.add_subcommand("gen", "Generate a seeded synthetic archive");
  gen->add_option("output", o.output, "Output QTNS archive")->required();
  gen->add_option("--layer", o.layers, "NAME=D0xD1x...[@RANK], repeatable");
  gen->add_option("--seed", o.seed, "Generator seed");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error[usage]: " << e.what() << '\n';
    return kConfig;
  }

  try {
    if (*compress) return cmd_compress(o, out, err);
    if (*inspect) return cmd_inspect(o, out, err);
    if (*verify) return cmd_verify(o, out, err);
    if (*bench) return cmd_bench(o, out, err);
    if (*gen) return cmd_gen(o, out, err);
  } catch (const std::exception& e) {
    const auto f = detail::classify(e);
    if (o.json) {
      json j = {{"error", {{"kind", f.kind}, {"message", e.what()}, {"exit_code", f.code}}}};
      if (const auto* v = dynamic_cast<const VerificationError*>(&e)) j["error"]["field"] = v->field();
      err << j.dump() << '\n';
    } else if (const auto* v = dynamic_cast<const VerificationError*>(&e)) {
      err << "error[verification]: field " << v->field() << ": " << e.what() << '\n';
    } else {
      err << "error[" << f.kind << "]: " << e.what() << '\n';
    }
    return f.code;
  }
  return kInternal;
}

}  // namespace weightpress::cli
