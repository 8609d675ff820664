#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "loftr/training.hpp"
#include "test_util.hpp"

using namespace loftr;
using loftr::testing::random_tensor;

TEST(GtCoarseMatches, IdentityMatchesEveryCell) {
  const auto truth = gt_coarse_matches(Homography(), 64, 64);
  ASSERT_EQ(truth.size(), 64u);
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(truth[k], (CellPair{k, k}));
}

TEST(GtCoarseMatches, EightPixelShiftMatchesRightNeighbour) {
  const auto truth = gt_coarse_matches(Homography::translation(8, 0), 64, 64);
  EXPECT_EQ(truth.size(), 56u);
  for (const CellPair& c : truth) {
    EXPECT_NE(c.a % 8, 7u);
    EXPECT_EQ(c.b, c.a + 1);
  }
}

TEST(GtCoarseMatches, FarTranslationGivesNothing) {
  EXPECT_TRUE(gt_coarse_matches(Homography::translation(100, 0), 64, 64).empty());
}

TEST(GtCoarseMatches, OneToOneAndSymmetricUnderSwap) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeometryRanges ranges;
    ranges.kind = seed % 2 ? GeometryKind::PlanarScene : GeometryKind::Homography;
    const WarpModel g = random_geometry(seed, 64, 64, ranges);
    const auto forward = gt_coarse_matches(g, 64, 64);
    std::set<std::size_t> as, bs;
    std::set<std::pair<std::size_t, std::size_t>> fw, bw;
    for (const CellPair& c : forward) {
      as.insert(c.a);
      bs.insert(c.b);
      fw.insert({c.a, c.b});
    }
    EXPECT_EQ(as.size(), forward.size());
    EXPECT_EQ(bs.size(), forward.size());
    for (const CellPair& c : gt_coarse_matches(inverse(g), 64, 64)) bw.insert({c.b, c.a});
    EXPECT_EQ(fw, bw) << "seed " << seed;
  }
}

TEST(GtCoarseMatches, PairsAreWithinOneCell) {
  const WarpModel g = random_geometry(3, 64, 64, GeometryRanges{});
  for (const CellPair& c : gt_coarse_matches(g, 64, 64)) {
    const Point2 a{8.0 * double(c.a % 8) + 3.5, 8.0 * double(c.a / 8) + 3.5};
    const Point2 b{8.0 * double(c.b % 8) + 3.5, 8.0 * double(c.b / 8) + 3.5};
    const Point2 q = warp(g, a);
    EXPECT_LE(std::hypot(q.x - b.x, q.y - b.y), 8.0);
  }
}

TEST(GtFineTarget, IdentityGivesWindowCenter) {
  // Cell 9 has its fine center at (5.5, 5.5); the window token sits at (6, 6).
  const auto t = gt_fine_target({9, 9}, Homography(), 64, 64, 5);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(t->x, 6.0);
  EXPECT_DOUBLE_EQ(t->y, 6.0);
}

TEST(GtFineTarget, SubCellShiftMovesTargetByHalfThePixels) {
  const auto t = gt_fine_target({9, 9}, Homography::translation(3, 0), 64, 64, 5);
  ASSERT_TRUE(t);
  EXPECT_NEAR(t->x - 6.0, 1.5, 1e-12);
  EXPECT_NEAR(t->y - 6.0, 0.0, 1e-12);
}

TEST(GtFineTarget, OutsideWindowIsAbsent) {
  EXPECT_FALSE(gt_fine_target({9, 9}, Homography::translation(7, 0), 64, 64, 5));
  EXPECT_FALSE(gt_fine_target({9, 9}, Homography::translation(3, 0), 64, 64, 1));
}

TEST(CoarseLoss, AnalyticCases) {
  ConfidenceMatrix ones;
  ones.prob = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  ones.log_prob = Tensor::from_data({2, 2}, {0, -30, -30, 0});
  EXPECT_NEAR(coarse_loss(ones, {{{0, 0}, {1, 1}}}).value.item(), 0, 1e-7);
  ConfidenceMatrix e;
  e.log_prob = Tensor::full({2, 2}, -1);
  e.prob = exp(e.log_prob);
  EXPECT_NEAR(coarse_loss(e, {{{0, 0}, {1, 1}}}).value.item(), 1, 1e-6);
}

TEST(CoarseLoss, MatchesHandSum) {
  const Tensor scores = random_tensor({4, 4}, 1, -2, 2);
  const std::vector<std::vector<CellPair>> truth{{{0, 1}, {3, 2}}};
  const ConfidenceMatrix c = dual_softmax(scores);
  const double expected = -0.5 * (double(c.log_prob.values()[1]) + c.log_prob.values()[14]);
  EXPECT_NEAR(coarse_loss(c, truth).value.item(), expected, 1e-6);
}

TEST(CoarseLoss, NonNegative) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ConfidenceMatrix c = dual_softmax(random_tensor({5, 5}, seed, -5, 5));
    EXPECT_GE(coarse_loss(c, {{{0, 0}, {2, 3}}}).value.item(), 0);
  }
}

TEST(CoarseLoss, EmptyTruthIsSkippedWithReason) {
  const ConfidenceMatrix c = dual_softmax(random_tensor({1, 3, 3}, 2));
  const LossTerm t = coarse_loss(c, {{}});
  EXPECT_FALSE(t.value.defined());
  EXPECT_EQ(t.count, 0u);
  EXPECT_EQ(t.skipped.size(), 1u);
}

TEST(CoarseLoss, OptimalTransportSupervisesDustbins) {
  const Tensor scores = random_tensor({3, 3}, 3);
  const ConfidenceMatrix c = sinkhorn_ot(scores, 3, Tensor::from_data({1}, {1}));
  const auto z = c.log_assignment.to_vector();  // [4, 4]
  // Matched (0,0); rows 1,2 and columns 1,2 go to the dustbins.
  const double expected = -(z[0] + z[1 * 4 + 3] + z[2 * 4 + 3] + z[3 * 4 + 1] + z[3 * 4 + 2]) / 5;
  EXPECT_NEAR(coarse_loss(c, {{{0, 0}}}).value.item(), expected, 1e-5);
}

TEST(FineLoss, AnalyticCases) {
  const Tensor e = Tensor::from_data({2, 2}, {1, 0, 0.5, 0.5});
  const Tensor v = Tensor::from_data({2}, {1, 1});
  EXPECT_NEAR(fine_loss(e, v, {Point2{1, 0}, Point2{0.5, 0.5}}).value.item(), 0, 1e-7);
  EXPECT_NEAR(fine_loss(e, v, {Point2{0, 0}, std::nullopt}).value.item(), 1, 1e-7);
}

TEST(FineLoss, VarianceIsClampedAndNoTargetsIsSkipped) {
  const Tensor e = Tensor::from_data({1, 2}, {0.01f, 0});
  EXPECT_NEAR(fine_loss(e, Tensor::from_data({1}, {0}), {Point2{0, 0}}).value.item(), 1e-4 / 1e-4, 1e-3);
  const LossTerm none = fine_loss(e, Tensor::from_data({1}, {1}), {std::nullopt});
  EXPECT_FALSE(none.value.defined());
  EXPECT_FALSE(none.skipped.empty());
}

TEST(FineLoss, NoGradientFlowsThroughVariance) {
  Tensor v = Tensor::parameter({1}, {2});
  Tensor e = Tensor::parameter({1, 2}, {1, 0});
  Tape tape;
  TapeScope scope(tape);
  tape.backward(fine_loss(e, v, {Point2{0, 0}}).value);
  EXPECT_EQ(v.grad()[0], 0);
  EXPECT_FLOAT_EQ(e.grad()[0], 1.0f);  // 2·1/2
}

TEST(TrainingBatch, DeterministicAndDistinctAcrossSteps) {
  Config config;
  config.batch_size = 2;
  const auto a = training_batch(config, 3), b = training_batch(config, 3), c = training_batch(config, 4);
  EXPECT_EQ(a[0].image_b.pixels, b[0].image_b.pixels);
  EXPECT_NE(a[0].image_a.pixels, c[0].image_a.pixels);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::parameter({2}, {1, -1});
  Adam adam({w}, 0.1);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(w, w)));
  }
  adam.step();
  EXPECT_NEAR(w.values()[0], 0.9, 1e-6);
  EXPECT_NEAR(w.values()[1], -0.9, 1e-6);
  EXPECT_EQ(w.grad()[0], 0);
}

namespace {

Config toy_config(std::size_t steps) {
  Config config;
  config.image_height = config.image_width = 48;
  config.d_coarse = 32;
  config.d_fine = 16;
  config.heads = 2;
  config.n_coarse = 2;
  config.batch_size = 2;
  config.steps = steps;
  return config;
}

}  // namespace

TEST(Train, ZeroStepsLeavesInitialization) {
  const Config config = toy_config(0);
  ModelParams m = init_model(config, config.seed);
  const ModelParams fresh = init_model(config, config.seed);
  EXPECT_TRUE(train(m, config).empty());
  const auto a = parameter_list(m), b = parameter_list(fresh);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].to_vector(), b[i].to_vector());
}

TEST(Train, SameSeedGivesIdenticalTrace) {
  const Config config = toy_config(3);
  ModelParams a = init_model(config, 0), b = init_model(config, 0);
  std::ostringstream ta, tb;
  write_metrics_csv(ta, train(a, config));
  write_metrics_csv(tb, train(b, config));
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(ta.str().substr(0, ta.str().find('\n')), "step,L_c,L_f,coarse_precision,coarse_recall,fine_epe");
}

TEST(Train, LossDecreasesOnSmallImages) {
  const Config config = toy_config(500);
  ModelParams m = init_model(config, config.seed);
  const auto trace = train(m, config);
  ASSERT_EQ(trace.size(), 500u);
  auto window_mean = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 25; ++i) s += trace[i].coarse_loss + trace[i].fine_loss;
    return s / 25;
  };
  EXPECT_LT(window_mean(475), window_mean(0));
}
