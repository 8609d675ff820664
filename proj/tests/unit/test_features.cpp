#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "loftr/features.hpp"
#include "loftr/model.hpp"
#include "loftr/synthetic.hpp"
#include "test_util.hpp"

using namespace loftr;

namespace {

BackboneParams backbone(std::uint64_t seed) {
  Config config;
  return init_model(config, seed).backbone;
}

}  // namespace

TEST(Extract, ShapesFollowImageExtents) {
  const FeatureMaps f = extract(Image::filled(64, 64, 0.5f), backbone(1));
  EXPECT_EQ(f.coarse.shape(), (Shape{64, 64}));
  EXPECT_EQ(f.fine.shape(), (Shape{1024, 32}));
  EXPECT_EQ(f.coarse_height, 8u);
  EXPECT_EQ(f.fine_width, 32u);
}

TEST(Extract, RejectsIndivisibleExtents) {
  EXPECT_THROW(extract(Image::filled(65, 64, 0.5f), backbone(1)), DimensionError);
  EXPECT_THROW(extract(Image::filled(64, 60, 0.5f), backbone(1)), DimensionError);
}

TEST(Extract, ConstantImageGivesConstantMaps) {
  BackboneParams p = backbone(2);
  for (real& v : p.coarse_bias.mutable_values()) v = 0;
  const FeatureMaps f = extract(Image::filled(32, 32, 0.7f), p);
  const std::size_t d = p.coarse_bias.numel();
  for (std::size_t cell = 1; cell < 16; ++cell)
    for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(f.coarse.values()[cell * d + c], f.coarse.values()[c]);
}

TEST(Extract, CoarseAndFineCellsMatchPatchOracle) {
  const BackboneParams p = backbone(3);
  const Image img = random_pattern(4, 24, 16);
  const FeatureMaps f = extract(img, p);
  const std::size_t dc = p.coarse_bias.numel(), df = p.fine_bias.numel();
  for (std::size_t cell = 0; cell < 6; ++cell) {
    const std::size_t cy = cell / 2, cx = cell % 2;
    for (std::size_t c = 0; c < dc; ++c) {
      double s = p.coarse_bias.values()[c];
      for (std::size_t k = 0; k < 64; ++k)
        s += double(img.at(cy * 8 + k / 8, cx * 8 + k % 8)) * p.coarse_weight.values()[k * dc + c];
      EXPECT_NEAR(f.coarse.values()[cell * dc + c], s, 1e-6);
    }
  }
  for (std::size_t cell : {0u, 9u, 95u}) {
    const std::size_t fy = cell / 8, fx = cell % 8;
    for (std::size_t c = 0; c < df; ++c) {
      double s = p.fine_bias.values()[c];
      for (std::size_t k = 0; k < 4; ++k)
        s += double(img.at(fy * 2 + k / 2, fx * 2 + k % 2)) * p.fine_weight.values()[k * df + c];
      EXPECT_NEAR(f.fine.values()[cell * df + c], s, 1e-6);
    }
  }
}

TEST(Extract, ShiftByEightPixelsShiftsOneCell) {
  const BackboneParams p = backbone(5);
  const Image img = random_pattern(6, 32, 40);
  Image shifted = Image::filled(32, 40, 0);
  for (std::size_t y = 8; y < 32; ++y)
    for (std::size_t x = 0; x < 40; ++x) shifted.at(y, x) = img.at(y - 8, x);
  const FeatureMaps a = extract(img, p), b = extract(shifted, p);
  const std::size_t d = p.coarse_bias.numel();
  for (std::size_t cy = 0; cy + 1 < 4; ++cy)
    for (std::size_t cx = 0; cx < 5; ++cx)
      for (std::size_t c = 0; c < d; ++c)
        EXPECT_NEAR(a.coarse.values()[(cy * 5 + cx) * d + c], b.coarse.values()[((cy + 1) * 5 + cx) * d + c], 1e-6);
}

TEST(Extract, BatchStacksSingleImages) {
  const BackboneParams p = backbone(7);
  const Image a = random_pattern(8, 16, 16), b = random_pattern(9, 16, 16);
  const FeatureMaps batch = extract_batch({&a, &b}, p);
  EXPECT_EQ(batch.coarse.shape(), (Shape{2, 4, 64}));
  EXPECT_EQ(slice(batch.coarse, 0, 1, 1).to_vector(), extract(b, p).coarse.to_vector());
}

TEST(StandardizeImage, ZeroMeanUnitVariance) {
  const Image s = standardize_image(random_pattern(10, 32, 32));
  double mean = 0, sq = 0;
  for (float v : s.pixels) mean += v;
  mean /= double(s.pixels.size());
  for (float v : s.pixels) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0, 1e-5);
  EXPECT_NEAR(sq / double(s.pixels.size()), 1, 1e-4);
  for (float v : standardize_image(Image::filled(8, 8, 0.3f)).pixels) EXPECT_EQ(v, 0.0f);
}

TEST(PositionalEncoding, OriginIsSinZeroCosOne) {
  const Tensor pe = positional_encoding(4, 4, 16);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_FLOAT_EQ(pe.values()[c], c % 2 == 0 ? 0.0f : 1.0f);
}

TEST(PositionalEncoding, MatchesFormula) {
  const std::size_t d = 32;
  const Tensor pe = positional_encoding(5, 6, d);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x)
      for (std::size_t k = 0; k < d / 4; ++k) {
        const double f = std::pow(10000.0, -4.0 * double(k) / double(d));
        const real* v = pe.values().data() + (y * 6 + x) * d;
        EXPECT_NEAR(v[2 * k], std::sin(y * f), 1e-6);
        EXPECT_NEAR(v[2 * k + 1], std::cos(y * f), 1e-6);
        EXPECT_NEAR(v[d / 2 + 2 * k], std::sin(x * f), 1e-6);
        EXPECT_NEAR(v[d / 2 + 2 * k + 1], std::cos(x * f), 1e-6);
      }
}

TEST(PositionalEncoding, SquaredNormIsHalfTheChannels) {
  for (std::size_t d : {16u, 64u, 256u}) {
    const Tensor pe = positional_encoding(16, 16, d);
    for (std::size_t p = 0; p < 256; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += std::pow(double(pe.values()[p * d + c]), 2);
      EXPECT_NEAR(s, d / 2.0, 1e-5 * d) << "d=" << d << " position " << p;
    }
  }
}

TEST(PositionalEncoding, PositionsPairwiseDistinct) {
  for (std::size_t side : {8u, 16u}) {
    const std::size_t d = 16;
    const Tensor pe = positional_encoding(side, side, d);
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < side * side; ++p)
      for (std::size_t q = p + 1; q < side * side; ++q) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += std::pow(double(pe.values()[p * d + c]) - pe.values()[q * d + c], 2);
        closest = std::min(closest, s);
      }
    EXPECT_GT(closest, 0) << side << "x" << side;
  }
}

TEST(PositionalEncoding, RejectsChannelsNotDivisibleByFour) {
  EXPECT_THROW(positional_encoding(4, 4, 6), ConfigError);
  EXPECT_THROW(positional_encoding(4, 4, 0), ConfigError);
}

TEST(AddPositional, AdditiveIdentityAndInverse) {
  const Tensor pe = positional_encoding(4, 4, 16);
  EXPECT_EQ(add_positional(Tensor::zeros({16, 16}), pe).to_vector(), pe.to_vector());
  const Tensor x = loftr::testing::random_tensor({16, 16}, 11);
  EXPECT_LT(loftr::testing::max_abs_diff(sub(add_positional(x, pe), pe).values(), x.values()), 1e-6);
  EXPECT_THROW(add_positional(Tensor::zeros({15, 16}), pe), DimensionError);
}
