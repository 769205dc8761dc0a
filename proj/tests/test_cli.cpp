#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "weightpress/cli.hpp"

using namespace weightpress;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("weightpress_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    in = (dir / "in.qtns").string();
    ASSERT_EQ(run({"gen", in, "--layer", "conv1=8x4x3x3", "--layer", "fc=16x12", "--layer", "head=4x16", "--seed", "3"}).code, 0);
    cfg = (dir / "cfg.json").string();
    write(cfg, R"({"defaults": {"prune": {"alpha": 0.25, "entangle_prob": 0.1, "stages": 2, "seed": 1},
                                "rank_svd": 3, "anneal": {"max_iters": 300, "seed": 2}},
                   "layers": {"conv1": {}, "fc": {"pipeline": ["decompose"]}}})");
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path dir;
  std::string in, cfg;
};

}  // namespace

TEST(LayerSpec, Parses) {
  const auto s = cli::parse_layer_spec("conv1=16x8x3x3@4");
  EXPECT_EQ(s.name, "conv1");
  EXPECT_EQ(s.shape, (Shape{16, 8, 3, 3}));
  EXPECT_EQ(*s.rank, 4u);
  EXPECT_THROW(cli::parse_layer_spec("=3x3"), ConfigError);
  EXPECT_THROW(cli::parse_layer_spec("a=3x0"), ConfigError);
  EXPECT_THROW(cli::parse_layer_spec("a=3x4@9"), ConfigError);
  EXPECT_THROW(cli::parse_layer_spec("a=3xq"), ConfigError);
}

TEST(Gen, ExactRankLayerHasZeroTail) {
  const auto w = cli::generate_layer(cli::parse_layer_spec("w=20x15@3"), 11);
  const auto f = svd(as_matrix(w).cast<double>());
  EXPECT_LT(eckart_young_tail(f.sigma, 3), 1e-10 * squared_norm(w));
  EXPECT_GT(f.sigma[2], 1e-3);
}

TEST(Gen, AddingLayersLeavesOthersUnchanged) {
  const auto a = cli::generate_archive({cli::parse_layer_spec("x=4x4")}, 5);
  const auto b = cli::generate_archive({cli::parse_layer_spec("y=3x3"), cli::parse_layer_spec("x=4x4")}, 5);
  EXPECT_EQ(a.at("x"), b.at("x"));
}

TEST_F(Cli, GenIsDeterministicAndEmptySpecIsEmpty) {
  const auto again = (dir / "again.qtns").string();
  ASSERT_EQ(run({"gen", again, "--layer", "conv1=8x4x3x3", "--layer", "fc=16x12", "--layer", "head=4x16", "--seed", "3"}).code, 0);
  EXPECT_EQ(slurp(in), slurp(again));
  const auto empty = (dir / "empty.qtns").string();
  ASSERT_EQ(run({"gen", empty}).code, 0);
  EXPECT_TRUE(load_archive(empty).empty());
}

TEST_F(Cli, CompressVerifyHappyPath) {
  const auto out = (dir / "out.qtns").string();
  const auto r = run({"compress", in, cfg, out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("conv1"), std::string::npos);
  EXPECT_NE(r.out.find("×"), std::string::npos);
  EXPECT_TRUE(fs::exists(out + ".report.json"));
  const auto v = run({"verify", in, out, out + ".report.json"});
  EXPECT_EQ(v.code, 0) << v.err;
  const auto j = run({"--json", "verify", in, out, out + ".report.json"});
  EXPECT_EQ(json::parse(j.out)["layers_checked"], 3);
}

TEST_F(Cli, CompressIsByteIdenticalAcrossRunsAndJobs) {
  const auto a = (dir / "a.qtns").string(), b = (dir / "b.qtns").string();
  ASSERT_EQ(run({"compress", in, cfg, a, "--jobs", "1"}).code, 0);
  ASSERT_EQ(run({"compress", in, cfg, b, "--jobs", "3"}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(a + ".report.json"), slurp(b + ".report.json"));
}

TEST_F(Cli, SeedOverrideChangesPrunedLayer) {
  const auto a = (dir / "a.qtns").string(), b = (dir / "b.qtns").string();
  ASSERT_EQ(run({"compress", in, cfg, a, "--seed", "1"}).code, 0);
  ASSERT_EQ(run({"compress", in, cfg, b, "--seed", "2"}).code, 0);
  EXPECT_NE(slurp(a), slurp(b));
}

TEST_F(Cli, TimingsOnlyWhenRequested) {
  const auto a = (dir / "a.qtns").string();
  ASSERT_EQ(run({"compress", in, cfg, a}).code, 0);
  EXPECT_EQ(slurp(a + ".report.json").find("wall_time_s"), std::string::npos);
  ASSERT_EQ(run({"compress", in, cfg, a, "--timings", "--report", (dir / "t.json").string()}).code, 0);
  EXPECT_NE(slurp(dir / "t.json").find("wall_time_s"), std::string::npos);
}

TEST_F(Cli, MissingLayerExitsTwo) {
  write(cfg, R"({"layers": {"nope": {"pipeline": ["decompose"], "rank_svd": 1}}})");
  const auto r = run({"compress", in, cfg, (dir / "o.qtns").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"compress", in}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, CorruptArchiveExitsThree) {
  const auto bad = (dir / "bad.qtns").string();
  write(bad, "QTNX garbage");
  const auto r = run({"inspect", bad});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("magic"), std::string::npos);
  const auto j = run({"--json", "inspect", bad});
  EXPECT_EQ(json::parse(j.err)["error"]["exit_code"], 3);
}

TEST_F(Cli, InspectCountsMatchHandTotals) {
  const auto r = run({"--json", "inspect", in});
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["tensors"].size(), 3u);
  EXPECT_EQ(j["total_params"], 8 * 4 * 3 * 3 + 16 * 12 + 4 * 16);
  const auto empty = (dir / "empty.qtns").string();
  ASSERT_EQ(run({"gen", empty}).code, 0);
  EXPECT_EQ(json::parse(run({"--json", "inspect", empty}).out)["tensors"].size(), 0u);
}

TEST_F(Cli, TamperedReportExitsFourNamingField) {
  const auto out = (dir / "out.qtns").string();
  ASSERT_EQ(run({"compress", in, cfg, out}).code, 0);
  auto report = json::parse(slurp(out + ".report.json"));
  report["layers"][1]["ratio"] = 99.0;
  write(dir / "bad.json", report.dump());
  const auto r = run({"verify", in, out, (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("layers[1].ratio"), std::string::npos);
}

TEST_F(Cli, MissingReportExitsThree) {
  const auto out = (dir / "out.qtns").string();
  ASSERT_EQ(run({"compress", in, cfg, out}).code, 0);
  EXPECT_EQ(run({"verify", in, out, (dir / "missing.json").string()}).code, 3);
  write(dir / "junk.json", "{not json");
  EXPECT_EQ(run({"verify", in, out, (dir / "junk.json").string()}).code, 3);
}

TEST_F(Cli, BadConfigValueExitsTwo) {
  write(cfg, R"({"layers": {"fc": {"pipeline": ["prune"], "prune": {"alpha": 1.5, "entangle_prob": 0}}}})");
  EXPECT_EQ(run({"compress", in, cfg, (dir / "o.qtns").string()}).code, 2);
}

TEST_F(Cli, BenchJson) {
  const auto r = run({"--json", "bench", "--size", "32x32x4", "--reps", "30", "--variants", "dense,factored"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["variant"], "factored");
  EXPECT_EQ(run({"bench", "--reps", "3"}).code, 2);
  EXPECT_EQ(run({"bench", "--size", "3x3"}).code, 2);
}
