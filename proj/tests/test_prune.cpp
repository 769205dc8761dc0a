#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "weightpress/prune.hpp"

using namespace weightpress;
namespace qt = weightpress::testing;

namespace {

std::vector<std::uint8_t> bits(const RetainMask& m) { return {m.data().begin(), m.data().end()}; }

RetainMask mask_of(Shape shape, std::vector<std::uint8_t> v) { return RetainMask(std::move(shape), std::move(v)); }

}  // namespace

TEST(Importance, AbsoluteValue) {
  EXPECT_EQ(importance(DenseTensor({3}, {1, -2, 0})), DenseTensor({3}, {1, 2, 0}));
  EXPECT_EQ(importance(DenseTensor({2, 2})), DenseTensor({2, 2}));
  Rng rng(3);
  const auto w = qt::random_tensor(rng, {7, 9});
  const auto imp = importance(w);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(imp[i], std::fabs(w[i]));
}

TEST(Softmax, ConstantInputIsUniform) {
  const auto p = softmax_probs(DenseTensor({4}, {2.5f, 2.5f, 2.5f, 2.5f}));
  for (float v : p.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Softmax, ClosedForm) {
  const auto p = softmax_probs(Tensor<double>({2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, MatchesLongDoubleReference) {
  Rng rng(11);
  const auto imp = importance(qt::random_tensor<double>(rng, {1000}, 3.0));
  const auto p = softmax_probs(imp);
  long double z = 0;
  for (double v : imp.data()) z += std::exp(static_cast<long double>(v));
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto ref = static_cast<double>(std::exp(static_cast<long double>(imp[i])) / z);
    EXPECT_NEAR(p[i], ref, 1e-12 * ref + 1e-300);
    sum += p[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < std::min(p.size(), i + 20); ++j) {
      if (imp[i] < imp[j]) {
        EXPECT_LE(p[i], p[j]);
      }
    }
  }
}

TEST(Softmax, NoOverflowForLargeInputs) {
  const auto p = softmax_probs(Tensor<double>({2}, {1000.0, 1000.0 + std::log(3.0)}));
  EXPECT_NEAR(p[1], 0.75, 1e-12);
}

TEST(Calibrate, Example) {
  const Tensor<double> p({4}, {0.1, 0.2, 0.3, 0.4});
  const auto th = calibrate_threshold(p, 0.25);
  EXPECT_DOUBLE_EQ(th.lambda, 0.2);
  EXPECT_EQ(th.ties_pruned, 0u);
  EXPECT_EQ(bits(retain_mask(p, th)), (std::vector<std::uint8_t>{0, 1, 1, 1}));
}

TEST(Calibrate, AlphaZeroPrunesNothing) {
  Rng rng(1);
  const auto p = softmax_probs(importance(qt::random_tensor<double>(rng, {50})));
  const auto th = calibrate_threshold(p, 0.0);
  EXPECT_EQ(count_zeros(retain_mask(p, th)), 0u);
}

TEST(Calibrate, AllEqualUsesIndexTieBreak) {
  const Tensor<double> p({6}, std::vector<double>(6, 1.0 / 6));
  const auto th = calibrate_threshold(p, 0.5);
  EXPECT_EQ(th.ties_pruned, 3u);
  EXPECT_EQ(bits(retain_mask(p, th)), (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1}));
}

TEST(Calibrate, RejectsBadAlpha) {
  const Tensor<double> p({2}, {0.5, 0.5});
  EXPECT_THROW(calibrate_threshold(p, 1.0), ValueError);
  EXPECT_THROW(calibrate_threshold(p, -0.1), ValueError);
}

TEST(RetainMask, LambdaExamples) {
  const Tensor<double> p({4}, {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(bits(retain_mask(p, 0.2)), (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(bits(retain_mask(p, 0.0)), (std::vector<std::uint8_t>{1, 1, 1, 1}));
  EXPECT_EQ(bits(retain_mask(p, 0.5)), (std::vector<std::uint8_t>{0, 0, 0, 0}));
}

TEST(Entangle, ZeroProbabilityIsNoOp) {
  const auto m = mask_of({2, 3}, {1, 0, 1, 0, 1, 1});
  EXPECT_EQ(entangle(m, 0.0, 99), m);
}

TEST(Entangle, SinglePassNoCascade) {
  const auto out = entangle(mask_of({4}, {1, 0, 1, 1}), 1.0, 0);
  EXPECT_EQ(bits(out), (std::vector<std::uint8_t>{0, 0, 0, 1}));
}

TEST(Entangle, RowsDoNotWrap) {
  // Neighbors of 2-axis masks are along the last axis only.
  const auto out = entangle(mask_of({2, 3}, {1, 1, 0, 1, 1, 1}), 1.0, 0);
  EXPECT_EQ(bits(out), (std::vector<std::uint8_t>{1, 0, 0, 1, 1, 1}));
}

TEST(Entangle, ConvUsesSpatialNeighborhood) {
  RetainMask m({1, 1, 3, 3});
  std::fill(m.data().begin(), m.data().end(), std::uint8_t{1});
  m[4] = 0;  // centre of the 3x3 kernel
  const auto out = entangle(m, 1.0, 0);
  EXPECT_EQ(bits(out), (std::vector<std::uint8_t>{1, 0, 1, 0, 0, 0, 1, 0, 1}));
}

TEST(Entangle, Validation) {
  const auto m = mask_of({2}, {1, 0});
  EXPECT_THROW(entangle(m, 1.5, 0), ValueError);
  EXPECT_THROW(entangle(m, -0.1, 0), ValueError);
  EXPECT_THROW(entangle(mask_of({2}, {2, 0}), 0.5, 0), ValueError);
}

TEST(Entangle, SeedDeterminism) {
  Rng rng(2);
  RetainMask m({64});
  for (auto& v : m.data()) v = rng.bernoulli(0.7) ? 1 : 0;
  EXPECT_EQ(entangle(m, 0.5, 17), entangle(m, 0.5, 17));
  EXPECT_NE(entangle(m, 0.5, 17), entangle(m, 0.5, 18));
}

TEST(IterativePrune, AlphaZeroIsIdentity) {
  Rng rng(4);
  const auto w = qt::random_tensor(rng, {8, 8});
  const auto r = iterative_prune(w, PruneConfig{.alpha = 0.0, .stages = 3});
  EXPECT_EQ(count_zeros(r.mask), 0u);
  EXPECT_EQ(r.achieved_sparsity, 0.0);
  EXPECT_EQ(r.pruned_weights, w);
}

TEST(IterativePrune, SmallExample) {
  const auto r = iterative_prune(DenseTensor({1, 4}, {1, -2, 3, -4}), PruneConfig{.alpha = 0.5});
  EXPECT_EQ(bits(r.mask), (std::vector<std::uint8_t>{0, 0, 1, 1}));
  EXPECT_EQ(r.pruned_weights, DenseTensor({1, 4}, {0, 0, 3, -4}));
  EXPECT_DOUBLE_EQ(r.achieved_sparsity, 0.5);
}

TEST(IterativePrune, ThreeStageSparsityOnSquareLayer) {
  Rng rng(8);
  const auto w = qt::random_tensor(rng, {64, 64});
  const auto r = iterative_prune(w, PruneConfig{.alpha = 0.1417, .stages = 3});
  EXPECT_LE(std::abs(r.achieved_sparsity - 0.1417), 1.0 / 4096);
  ASSERT_EQ(r.per_stage_sparsity.size(), 3u);
  EXPECT_LT(r.per_stage_sparsity[0], r.per_stage_sparsity[1]);
  EXPECT_LT(r.per_stage_sparsity[1], r.per_stage_sparsity[2]);
}

TEST(IterativePrune, MatchesMagnitudeOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = qt::random_tensor(rng, {1 + rng.below(20), 1 + rng.below(20)});
    const double alpha = 0.9 * rng.uniform();
    const auto r = iterative_prune(w, PruneConfig{.alpha = alpha});
    const auto k = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(w.size())));
    EXPECT_EQ(bits(r.mask), qt::topk_magnitude_mask(w, std::min(k, w.size() - 1)));
  }
}

TEST(IterativePrune, TiesBrokenByFlatIndex) {
  const DenseTensor w({2, 3}, {1, -1, 1, 1, -1, 1});
  const auto r = iterative_prune(w, PruneConfig{.alpha = 0.5});
  EXPECT_EQ(bits(r.mask), (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 1}));
}

TEST(IterativePrune, EntanglementOnlyAddsPruning) {
  Rng rng(5);
  const auto w = qt::random_tensor(rng, {16, 16});
  const auto base = iterative_prune(w, PruneConfig{.alpha = 0.2, .stages = 1});
  const auto ent = iterative_prune(w, PruneConfig{.alpha = 0.2, .stages = 1, .entangle_prob = 0.3, .seed = 9});
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!base.mask[i]) {
      EXPECT_EQ(ent.mask[i], 0);
    }
  }
  EXPECT_GT(count_zeros(ent.mask), count_zeros(base.mask));
}

TEST(IterativePrune, Deterministic) {
  Rng rng(6);
  const auto w = qt::random_tensor(rng, {4, 3, 3, 3});
  const PruneConfig cfg{.alpha = 0.3, .stages = 2, .entangle_prob = 0.2, .seed = 77};
  const auto a = iterative_prune(w, cfg), b = iterative_prune(w, cfg);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.pruned_weights, b.pruned_weights);
}

TEST(IterativePrune, ConfigValidation) {
  const DenseTensor w({2, 2});
  EXPECT_THROW(iterative_prune(w, PruneConfig{.alpha = 1.0}), ValueError);
  EXPECT_THROW(iterative_prune(w, PruneConfig{.alpha = 0.1, .stages = 0}), ValueError);
  EXPECT_THROW(iterative_prune(w, PruneConfig{.alpha = 0.1, .entangle_prob = 2.0}), ValueError);
}

TEST(Mask, ApplyAndPopcount) {
  const auto m = mask_of({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(apply_mask(DenseTensor({2, 2}, {1, 2, 3, 4}), m), DenseTensor({2, 2}, {1, 0, 0, 4}));
  EXPECT_EQ(mask_popcount(m), 2u);
  EXPECT_THROW(apply_mask(DenseTensor({3}), m), ShapeError);
}
