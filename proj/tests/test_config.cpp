#include <gtest/gtest.h>

#include "weightpress/config.hpp"

using namespace weightpress;

TEST(Config, DefaultsMergeWithOverrides) {
  const auto cfg = PipelineConfig::parse(R"({
    "defaults": {"prune": {"alpha": 0.1417, "stages": 3, "entangle_prob": 0.05, "seed": 1},
                 "rank_svd": 41, "anneal": {"seed": 2}},
    "layers": {"a": {}, "b": {"prune": {"alpha": 0.3779}, "rank_svd": 8}}
  })");
  ASSERT_EQ(cfg.layers().size(), 2u);
  const auto a = cfg.resolve("a");
  EXPECT_EQ(a.stage_list, (std::vector<Stage>{Stage::prune, Stage::decompose, Stage::factorize}));
  EXPECT_DOUBLE_EQ(a.prune.alpha, 0.1417);
  EXPECT_EQ(a.prune.stages, 3u);
  EXPECT_EQ(*a.rank_svd, 41u);
  EXPECT_EQ(a.anneal.rank, 41u);
  EXPECT_EQ(a.anneal.seed, 2u);
  const auto b = cfg.resolve("b");
  EXPECT_DOUBLE_EQ(b.prune.alpha, 0.3779);
  EXPECT_DOUBLE_EQ(b.prune.entangle_prob, 0.05);
  EXPECT_EQ(b.anneal.rank, 8u);
  EXPECT_THROW(cfg.resolve("c"), ConfigError);
}

TEST(Config, SeedOverrideReplacesEverySeed) {
  auto cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["prune", "factorize"],
    "prune": {"alpha": 0.1, "entangle_prob": 0, "seed": 5}, "anneal": {"rank": 2, "seed": 6}}}})");
  cfg.set_seed_override(99);
  const auto a = cfg.resolve("a");
  EXPECT_EQ(a.prune.seed, 99u);
  EXPECT_EQ(a.anneal.seed, 99u);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(PipelineConfig::parse(R"({"layer": {}})"), ConfigError);
  const auto cfg = PipelineConfig::parse(R"({"layers": {"a": {"prune": {"alpha": 0.1, "entangle_prob": 0, "beta": 1}}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
}

TEST(Config, RequiredFields) {
  auto cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["prune"], "prune": {"alpha": 0.1}}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
  cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["decompose"]}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
  cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["factorize"]}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
}

TEST(Config, RangeChecks) {
  auto cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["prune"], "prune": {"alpha": 1.0, "entangle_prob": 0}}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
  cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["squash"]}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
  cfg = PipelineConfig::parse(R"({"layers": {"a": {"pipeline": ["decompose"], "rank_svd": "four"}}})");
  EXPECT_THROW(cfg.resolve("a"), ConfigError);
}

TEST(Config, InvalidJson) { EXPECT_THROW(PipelineConfig::parse("{"), ConfigError); }

TEST(Config, EmptyConfig) {
  const auto cfg = PipelineConfig::parse("{}");
  EXPECT_TRUE(cfg.empty());
}

TEST(Config, EchoRoundTrips) {
  const auto cfg = PipelineConfig::parse(R"({"layers": {"a": {"prune": {"alpha": 0.2, "entangle_prob": 0.1},
    "rank_svd": 3, "anneal": {"eta0": 0.5}}}})");
  const auto a = cfg.resolve("a");
  const auto again = layer_config_from_json("a", to_json(a));
  EXPECT_EQ(to_json(again), to_json(a));
  EXPECT_DOUBLE_EQ(*again.anneal.eta0, 0.5);
}
