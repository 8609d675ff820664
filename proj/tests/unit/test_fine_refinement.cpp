#include <gtest/gtest.h>

#include <cmath>

#include "loftr/fine_refinement.hpp"
#include "loftr/model.hpp"
#include "test_util.hpp"

using namespace loftr;
using loftr::testing::random_tensor;

namespace {

Config small_config() {
  Config config;
  config.d_coarse = 16;
  config.d_fine = 8;
  config.heads = 2;
  return config;
}

ModelParams perturbed_model(const Config& config, std::uint64_t seed) {
  ModelParams m = init_model(config, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> dist(-0.2, 0.2);
  for (Tensor t : parameter_list(m))
    for (real& v : t.mutable_values()) v += real(dist(rng));
  return m;
}

}  // namespace

TEST(LocateFineCenter, FirstCellsAndFormula) {
  const Point2 first = locate_fine_center(0, 8, 8);
  EXPECT_EQ(first.x, 1.5);
  EXPECT_EQ(first.y, 1.5);
  const Point2 right = locate_fine_center(1, 8, 8);
  EXPECT_EQ(right.x, 5.5);
  EXPECT_EQ(right.y, 1.5);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      const Point2 p = locate_fine_center(r * 7 + c, 6, 7);
      EXPECT_EQ(p.x, 4.0 * c + 1.5);
      EXPECT_EQ(p.y, 4.0 * r + 1.5);
    }
  EXPECT_THROW(locate_fine_center(64, 8, 8), IndexError);
}

TEST(LocateFineCenter, LandsOnCenterOfImageBlock) {
  for (std::size_t cell = 0; cell < 48; ++cell) {
    const Point2 img = fine_to_image(locate_fine_center(cell, 6, 8));
    // Pixels 8c..8c+7 have their mean position at 8c + 3.5.
    EXPECT_EQ(img.x, 8.0 * double(cell % 8) + 3.5);
    EXPECT_EQ(img.y, 8.0 * double(cell / 8) + 3.5);
    const Point2 back = image_to_fine(img);
    EXPECT_EQ(back.x, locate_fine_center(cell, 6, 8).x);
  }
}

TEST(PlaceWindow, RoundsHalfUpAndChecksBorder) {
  const auto p = place_window({10, 10}, 32, 32, 5);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->row, 10);
  EXPECT_EQ(p->col, 10);
  const auto half = place_window({5.5, 9.5}, 32, 32, 5);
  ASSERT_TRUE(half);
  EXPECT_EQ(half->col, 6);
  EXPECT_EQ(half->row, 10);
  EXPECT_FALSE(place_window({1, 1}, 32, 32, 5));
  EXPECT_FALSE(place_window({29.5, 10}, 32, 32, 5));
  EXPECT_TRUE(place_window({2, 29}, 32, 32, 5));
}

TEST(CropWindow, RowsAndColsAroundCenter) {
  const auto rows = window_rows({10, 10}, 32, 5);
  ASSERT_EQ(rows.size(), 25u);
  EXPECT_EQ(rows.front(), 8 * 32 + 8);
  EXPECT_EQ(rows.back(), 12 * 32 + 12);
}

TEST(CropWindow, EqualsDirectSlicing) {
  const std::size_t h = 12, w = 16, c = 3;
  const Tensor grid = random_tensor({h * w, c}, 1);
  const Tensor win = crop_window(grid, w, {5, 7}, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t k = 0; k < c; ++k)
        EXPECT_EQ(win.values()[(i * 5 + j) * c + k], grid.values()[((3 + i) * w + (5 + j)) * c + k]);
}

TEST(CropWindows, BorderMatchIsDroppedWithReason) {
  const Tensor grid = random_tensor({32 * 32, 4}, 2);
  std::string reason;
  EXPECT_FALSE(crop_windows(grid, grid, 8, 8, CoarseMatch{7, 7, 1}, 5, &reason));
  EXPECT_FALSE(reason.empty());
  EXPECT_TRUE(crop_windows(grid, grid, 8, 8, CoarseMatch{9, 18, 1}, 5));
}

TEST(WindowOffsets, RowMajorColumnThenRow) {
  const auto o = window_offsets(3).to_vector();
  ASSERT_EQ(o.size(), 18u);
  EXPECT_EQ(o[0], -1);  // dx of top-left
  EXPECT_EQ(o[1], -1);  // dy of top-left
  EXPECT_EQ(o[2], 0);
  EXPECT_EQ(o[17], 1);
}

TEST(HeatmapMoments, DeltaGivesExactOffsetAndZeroVariance) {
  std::vector<real> h(25, 0);
  h[(2 - 2) * 5 + (2 + 1)] = 1;  // dx = +1, dy = −2
  const Refinement r = heatmap_moments(Tensor::from_data({1, 25}, h), 5);
  EXPECT_EQ(r.expectation.values()[0], 1);
  EXPECT_EQ(r.expectation.values()[1], -2);
  EXPECT_EQ(r.variance.values()[0], 0);
}

TEST(HeatmapMoments, UniformWindowHasVarianceFour) {
  const Refinement r = heatmap_moments(Tensor::full({1, 25}, real(1.0 / 25)), 5);
  EXPECT_NEAR(r.expectation.values()[0], 0, 1e-7);
  EXPECT_NEAR(r.expectation.values()[1], 0, 1e-7);
  EXPECT_NEAR(r.variance.values()[0], 4.0, 1e-6);
}

TEST(HeatmapMoments, CentrallySymmetricGivesZeroOffset) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<real> h = random_tensor({25}, seed, 0, 1).to_vector();
    for (std::size_t i = 0; i < 12; ++i) h[24 - i] = h[i];
    double total = 0;
    for (real v : h) total += v;
    for (real& v : h) v = real(v / total);
    const Refinement r = heatmap_moments(Tensor::from_data({1, 25}, h), 5);
    EXPECT_NEAR(r.expectation.values()[0], 0, 1e-6);
    EXPECT_NEAR(r.expectation.values()[1], 0, 1e-6);
  }
}

TEST(Refine, HeatmapIsDistributionAndMomentsAreBounded) {
  Config config = small_config();
  config.window = 5;
  const ModelParams m = perturbed_model(config, 3);
  const Tensor wa = random_tensor({6, 25, 8}, 4), wb = random_tensor({6, 25, 8}, 5);
  const Refinement r = refine(wa, wb, m.fine.stack, fine_attention_options(config), 5);
  for (const Tensor& s : {sum(r.heatmap, 1)})
    for (real v : s.values()) EXPECT_NEAR(v, 1, 1e-6);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_LE(std::abs(r.expectation.values()[2 * i]), 2.0);
    EXPECT_LE(std::abs(r.expectation.values()[2 * i + 1]), 2.0);
    EXPECT_GE(r.variance.values()[i], -1e-6);
    EXPECT_LE(r.variance.values()[i], 8.0 + 1e-5);
  }
}

TEST(RefineAll, EmptyInputGivesEmptyOutput) {
  const Config config = small_config();
  const ModelParams m = init_model(config, 6);
  FineInputs in{random_tensor({1, 256, 8}, 7), random_tensor({1, 256, 8}, 8), random_tensor({1, 16, 16}, 9),
                random_tensor({1, 16, 16}, 10), 4, 4, 16, 16};
  const FineMatchSet out = refine_all({}, in, m.fine, fine_attention_options(config), 5);
  EXPECT_TRUE(out.matches.empty());
  EXPECT_TRUE(out.dropped.empty());
}

TEST(RefineAll, InteriorMatchStaysInsideWindow) {
  const Config config = small_config();
  const ModelParams m = perturbed_model(config, 11);
  FineInputs in{random_tensor({1, 256, 8}, 12), random_tensor({1, 256, 8}, 13), random_tensor({1, 16, 16}, 14),
                random_tensor({1, 16, 16}, 15), 4, 4, 16, 16};
  const FineMatchSet out = refine_all({{5, 10, 0.9}, {0, 3, 0.5}}, in, m.fine, fine_attention_options(config), 5);
  ASSERT_EQ(out.matches.size(), 1u);
  ASSERT_EQ(out.dropped.size(), 1u);
  const FineMatch& f = out.matches[0];
  EXPECT_EQ(f.cell_a, 5u);
  EXPECT_EQ(f.point_a.x, 11.5);
  EXPECT_EQ(f.point_a.y, 11.5);
  const Point2 b_center = fine_to_image(locate_fine_center(10, 4, 4));
  // Two fine cells of offset plus the rounding of the window center.
  EXPECT_LE(std::abs(f.point_b.x - b_center.x), 2.0 * 2.5 + 1e-9);
  EXPECT_LE(std::abs(f.point_b.y - b_center.y), 2.0 * 2.5 + 1e-9);
  EXPECT_DOUBLE_EQ(f.confidence, 0.9);
}

TEST(RefineAll, SymmetricWindowsOnIdenticalMapsStayAtCenter) {
  // Fine features depend only on |offset| from the window center and coarse
  // maps are constant, so the heatmap is centrally symmetric and the refined
  // point must coincide with A's point.
  const Config config = small_config();
  const ModelParams m = perturbed_model(config, 16);
  const Tensor table = random_tensor({16, 8}, 17);
  std::vector<real> fine(256 * 8);
  for (std::size_t v = 0; v < 16; ++v)
    for (std::size_t u = 0; u < 16; ++u) {
      const std::size_t key = std::min<std::size_t>(std::abs(int(u) - 6), 3) * 4 +
                              std::min<std::size_t>(std::abs(int(v) - 6), 3);
      for (std::size_t c = 0; c < 8; ++c) fine[(v * 16 + u) * 8 + c] = table.values()[key * 8 + c];
    }
  const Tensor f = Tensor::from_data({1, 256, 8}, fine);
  const Tensor coarse = Tensor::full({1, 16, 16}, real(0.3));
  FineInputs in{f, f, coarse, coarse, 4, 4, 16, 16};
  const FineMatchSet out = refine_all({{5, 5, 1}}, in, m.fine, fine_attention_options(config), 5);
  ASSERT_EQ(out.matches.size(), 1u);
  const FineMatch& m0 = out.matches[0];
  EXPECT_LT(std::hypot(m0.point_b.x - m0.point_a.x, m0.point_b.y - m0.point_a.y) / 2, 0.1);
}
