#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "loftr/errors.hpp"
#include "loftr/geometry.hpp"
#include "loftr/synthetic.hpp"

using namespace loftr;

namespace {

Homography sample_homography(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> small(-0.05, 0.05), shift(-5, 5), persp(-3e-4, 3e-4);
  Eigen::Matrix3d m;
  m << 1 + small(rng), small(rng), shift(rng), small(rng), 1 + small(rng), shift(rng), persp(rng), persp(rng), 1;
  return Homography(m);
}

Point2 oracle_warp(const Eigen::Matrix3d& h, Point2 p) {
  const double x = h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2);
  const double y = h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2);
  const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
  return {x / w, y / w};
}

}  // namespace

TEST(WarpPoint, IdentityAndTranslation) {
  const Point2 p = warp_point(Homography(), {3.5, 7});
  EXPECT_EQ(p.x, 3.5);
  EXPECT_EQ(p.y, 7);
  const Point2 q = warp_point(Homography::translation(2, -1), {0, 0});
  EXPECT_EQ(q.x, 2);
  EXPECT_EQ(q.y, -1);
}

TEST(WarpPoint, MatchesHomogeneousOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Homography h = sample_homography(seed);
    const Point2 p{double(seed * 3 % 64), double(seed * 7 % 64)};
    const Point2 a = warp_point(h, p), b = oracle_warp(h.matrix(), p);
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
  }
}

TEST(WarpPoint, InverseRoundTrip) {
  const Homography h = sample_homography(1);
  for (double x = 0; x < 64; x += 9.5) {
    const Point2 q = warp_point(h.inverse(), warp_point(h, {x, 64 - x}));
    EXPECT_NEAR(q.x, x, 1e-6);
    EXPECT_NEAR(q.y, 64 - x, 1e-6);
  }
}

TEST(WarpPoint, PointAtInfinityRaises) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = -1;  // w = 1 − x
  EXPECT_THROW(warp_point(Homography(m), {1, 0}), GeometryError);
}

TEST(Homography, RejectsSingularMatrix) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(2, 2) = 1;
  EXPECT_THROW(Homography{m}, GeometryError);
}

TEST(CornerError, AnalyticCases) {
  const Homography h = sample_homography(2);
  EXPECT_EQ(corner_error(h, h, 64, 64), 0);
  EXPECT_NEAR(corner_error(Homography::translation(3, 0), Homography(), 64, 64), 3.0, 1e-12);
}

TEST(CornerError, MatchesPerCornerComputation) {
  const Homography a = sample_homography(3), b = sample_homography(4);
  const double w = 48, hgt = 32;
  double total = 0;
  for (Point2 c : {Point2{0, 0}, Point2{w - 1, 0}, Point2{w - 1, hgt - 1}, Point2{0, hgt - 1}}) {
    const Point2 p = oracle_warp(a.matrix(), c), q = oracle_warp(b.matrix(), c);
    total += std::hypot(p.x - q.x, p.y - q.y);
  }
  EXPECT_NEAR(corner_error(a, b, 32, 48), total / 4, 1e-9);
}

TEST(Auc, AnalyticCases) {
  EXPECT_EQ(auc(std::vector<double>{0, 0, 0}, 3), 1.0);
  EXPECT_EQ(auc(std::vector<double>{4, 5, 100}, 3), 0.0);
  EXPECT_EQ(auc(std::vector<double>{5}, 10), 0.5);
  EXPECT_NEAR(auc(std::vector<double>{1, 2}, 4), 0.5 * (3.0 / 4) + 0.5 * (2.0 / 4), 1e-15);
  EXPECT_THROW(auc(std::vector<double>{}, 3), UndefinedInputError);
}

TEST(Auc, InfiniteErrorsCountAsMisses) {
  EXPECT_EQ(auc(std::vector<double>{0, std::numeric_limits<double>::infinity()}, 5), 0.5);
}

TEST(Auc, MonotoneAndScaleInvariant) {
  std::vector<double> e{0.2, 1.1, 2.9, 4.4, 7.0};
  const double base = auc(e, 5);
  e.push_back(6.0);
  EXPECT_LE(auc(e, 5), base);
  std::vector<double> scaled;
  for (double v : e) scaled.push_back(3 * v);
  EXPECT_NEAR(auc(e, 5), auc(scaled, 15), 1e-12);
  EXPECT_LE(auc(e, 3), auc(e, 5));
  EXPECT_LE(auc(e, 5), auc(e, 10));
}

TEST(EndpointError, AnalyticCases) {
  const std::vector<Correspondence> exact{{{3, 4}, {3, 4}}, {{10, 2}, {10, 2}}};
  EXPECT_EQ(endpoint_error(exact, Homography()).mean, 0);
  const std::vector<Correspondence> off{{{3, 4}, {3.5, 4}}};
  EXPECT_DOUBLE_EQ(endpoint_error(off, Homography()).per_match[0], 0.5);
}

TEST(Dlt, RecoversKnownHomographyFromFourPoints) {
  const Homography h = sample_homography(5);
  std::vector<Correspondence> c;
  for (Point2 p : {Point2{0, 0}, Point2{63, 0}, Point2{63, 63}, Point2{0, 63}}) c.push_back({p, warp_point(h, p)});
  EXPECT_LT((dlt_homography(c).matrix() - h.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Dlt, IdentityCorrespondencesGiveIdentity) {
  std::vector<Correspondence> c;
  for (Point2 p : {Point2{1, 2}, Point2{40, 5}, Point2{33, 50}, Point2{7, 44}}) c.push_back({p, p});
  EXPECT_LT((dlt_homography(c).matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dlt, CollinearOrTooFewPointsRaise) {
  std::vector<Correspondence> line;
  for (double t = 0; t < 5; ++t) line.push_back({{t, t}, {2 * t, t}});
  EXPECT_THROW(dlt_homography(line), GeometryError);
  EXPECT_THROW(dlt_homography(std::vector<Correspondence>(line.begin(), line.begin() + 3)), GeometryError);
}

TEST(Dlt, InvariantToInputOrder) {
  const Homography h = sample_homography(6);
  std::vector<Correspondence> c;
  for (int i = 0; i < 12; ++i) {
    const Point2 p{double(i * 37 % 64), double(i * 17 % 64)};
    Point2 q = warp_point(h, p);
    q.x += 0.3 * std::sin(i);
    c.push_back({p, q});
  }
  const Homography a = dlt_homography(c);
  std::reverse(c.begin(), c.end());
  std::rotate(c.begin(), c.begin() + 5, c.end());
  EXPECT_LT((dlt_homography(c).matrix() - a.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ransac, ExactDataRecoversModelWithAllInliers) {
  const Homography h = sample_homography(7);
  std::vector<Correspondence> c;
  for (int i = 0; i < 20; ++i) {
    const Point2 p{double(i * 13 % 64), double(i * 29 % 64)};
    c.push_back({p, warp_point(h, p)});
  }
  const RansacResult r = ransac_homography(c, {3.0, 200, 1});
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.inlier_count, 20u);
  EXPECT_LT((r.homography.matrix() - h.matrix()).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Ransac, ThirtyPercentOutliersOnLargeImage) {
  const Homography h = sample_homography(8);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> coord(0, 480);
  std::vector<Correspondence> c;
  for (int i = 0; i < 200; ++i) {
    const Point2 p{coord(rng), coord(rng)};
    c.push_back({p, i % 10 < 3 ? Point2{coord(rng), coord(rng)} : warp_point(h, p)});
  }
  const RansacResult r = ransac_homography(c, {3.0, 1000, 10});
  ASSERT_TRUE(r.success);
  EXPECT_LT(corner_error(r.homography, h, 480, 480), 1.0);
}

TEST(Ransac, TooFewPointsIsAFailureResult) {
  const std::vector<Correspondence> c{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  const RansacResult r = ransac_homography(c, {});
  EXPECT_FALSE(r.success);
}

TEST(Ransac, DeterministicForSeed) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(0, 64);
  std::vector<Correspondence> c;
  for (int i = 0; i < 30; ++i) c.push_back({{coord(rng), coord(rng)}, {coord(rng), coord(rng)}});
  const RansacResult a = ransac_homography(c, {3.0, 100, 5}), b = ransac_homography(c, {3.0, 100, 5});
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.homography.matrix(), b.homography.matrix());
}

TEST(PlanarScene, ReprojectionEqualsInducedHomography) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeometryRanges ranges;
    ranges.kind = GeometryKind::PlanarScene;
    const PlanarScene scene = std::get<PlanarScene>(random_geometry(seed, 64, 64, ranges));
    const Homography h = scene.induced_homography();
    for (double x = 0; x < 64; x += 7)
      for (double y = 0; y < 64; y += 11) {
        const Point2 a = scene.reproject({x, y}), b = warp_point(h, {x, y});
        EXPECT_NEAR(a.x, b.x, 1e-9);
        EXPECT_NEAR(a.y, b.y, 1e-9);
      }
  }
}

TEST(PlanarScene, InverseUndoesReprojection) {
  GeometryRanges ranges;
  ranges.kind = GeometryKind::PlanarScene;
  const PlanarScene scene = std::get<PlanarScene>(random_geometry(3, 64, 64, ranges));
  const Point2 q = scene.inverse().reproject(scene.reproject({20, 30}));
  EXPECT_NEAR(q.x, 20, 1e-9);
  EXPECT_NEAR(q.y, 30, 1e-9);
}

TEST(SynthPair, IdentityGivesEqualImages) {
  const SyntheticPair p = synth_pair_with(1, 32, 32, Homography());
  EXPECT_EQ(p.image_a.pixels, p.image_b.pixels);
}

TEST(SynthPair, SameSeedIsBitIdentical) {
  const SyntheticPair a = synth_pair(2, 64, 64, GeometryRanges{}), b = synth_pair(2, 64, 64, GeometryRanges{});
  EXPECT_EQ(a.image_a.pixels, b.image_a.pixels);
  EXPECT_EQ(a.image_b.pixels, b.image_b.pixels);
  EXPECT_EQ(as_homography(a.geometry).matrix(), as_homography(b.geometry).matrix());
}

TEST(SynthPair, IntegerTranslationShiftsColumns) {
  const SyntheticPair p = synth_pair_with(3, 32, 32, Homography::translation(8, 0));
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 8; x < 32; ++x) EXPECT_NEAR(p.image_b.at(y, x), p.image_a.at(y, x - 8), 1e-6);
}

TEST(SynthPair, ValuesInUnitIntervalAndOverlapEnforced) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SyntheticPair p = synth_pair(seed, 64, 64, GeometryRanges{});
    for (float v : p.image_b.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    EXPECT_GE(overlap_fraction(p.geometry, 64, 64), 0.25);
  }
}

TEST(TextFormats, HomographyRoundTrip) {
  const Homography h = sample_homography(12);
  const Homography back = parse_homography(format_homography(h));
  EXPECT_EQ(back.matrix(), h.matrix());
  EXPECT_THROW(parse_homography("1 2 3"), InputError);
}

TEST(TextFormats, CorrespondenceCsvRoundTrip) {
  const std::vector<Correspondence> c{{{1.5, 2}, {3, 4.25}, 0.5}, {{0, 0}, {1, 1}, 1}};
  std::stringstream s;
  write_correspondences_csv(s, c);
  const auto back = read_correspondences_csv(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].b.y, 4.25);
  EXPECT_EQ(back[0].confidence, 0.5);
}
