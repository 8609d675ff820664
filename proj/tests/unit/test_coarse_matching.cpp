#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "loftr/coarse_matching.hpp"
#include "test_util.hpp"

using namespace loftr;
using loftr::testing::random_tensor;

namespace {

using PairSet = std::set<std::pair<std::size_t, std::size_t>>;

PairSet mnn_oracle(const std::vector<real>& p, std::size_t rows, std::size_t cols, double threshold) {
  PairSet out;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best_j = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (p[i * cols + j] > p[i * cols + best_j]) best_j = j;
    std::size_t best_i = 0;
    for (std::size_t k = 1; k < rows; ++k)
      if (p[k * cols + best_j] > p[best_i * cols + best_j]) best_i = k;
    if (best_i == i && p[i * cols + best_j] >= threshold) out.insert({i, best_j});
  }
  return out;
}

}  // namespace

TEST(ScoreMatrix, ScaledInnerProducts) {
  const Tensor a = random_tensor({4, 6}, 1), b = random_tensor({5, 6}, 2);
  const auto s = score_matrix(a, b, 0.1).to_vector();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < 6; ++c) dot += double(a.values()[i * 6 + c]) * b.values()[j * 6 + c];
      EXPECT_NEAR(s[i * 5 + j], dot / 0.1, 1e-5);
    }
}

TEST(ScoreMatrix, RejectsNonPositiveTemperature) {
  EXPECT_THROW(score_matrix(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), 0.0), ConfigError);
  EXPECT_THROW(score_matrix(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), -1.0), ConfigError);
}

TEST(DualSoftmax, FactorsSumToOnePerAxis) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor s = random_tensor({6, 8}, seed, -10, 10);
    const ConfidenceMatrix c = dual_softmax(s);
    const Tensor rows = exp(sub(c.log_prob, log_softmax(s, 0)));
    const Tensor cols = exp(sub(c.log_prob, log_softmax(s, 1)));
    for (real v : sum(rows, 1).to_vector()) ASSERT_NEAR(v, 1, 1e-6) << "seed " << seed;
    for (real v : sum(cols, 0).to_vector()) ASSERT_NEAR(v, 1, 1e-6) << "seed " << seed;
  }
}

TEST(DualSoftmax, DiagonalAnalyticCase) {
  const auto p = dual_softmax(Tensor::from_data({2, 2}, {10, 0, 0, 10})).prob.to_vector();
  const double on = 1 / (1 + std::exp(-10.0));
  EXPECT_NEAR(p[0], on * on, 1e-6);
  EXPECT_NEAR(p[3], on * on, 1e-6);
  EXPECT_NEAR(p[1], std::pow(1 - on, 2), 1e-9);
}

TEST(DualSoftmax, UniformScoresGiveInverseProduct) {
  for (real v : dual_softmax(Tensor::zeros({4, 5})).prob.to_vector()) EXPECT_NEAR(v, 1.0 / 20, 1e-7);
}

TEST(DualSoftmax, BatchedEqualsPerPair) {
  const Tensor s = random_tensor({3, 4, 5}, 3, -5, 5);
  const ConfidenceMatrix all = dual_softmax(s);
  for (std::size_t p = 0; p < 3; ++p) {
    const ConfidenceMatrix one = dual_softmax(reshape(slice(s, 0, p, 1), {4, 5}));
    EXPECT_LT(loftr::testing::max_abs_diff(slice(all.prob, 0, p, 1).values(), one.prob.values()), 1e-7);
  }
}

TEST(Sinkhorn, HundredIterationsMeetMarginals) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 4 + seed % 4, m = 5 + seed % 3;
    const ConfidenceMatrix c = sinkhorn_ot(random_tensor({n, m}, seed, -3, 3), 100, Tensor::from_data({1}, {0.5}));
    ASSERT_EQ(c.log_assignment.shape(), (Shape{n + 1, m + 1}));
    const Tensor z = exp(c.log_assignment);
    const auto rows = sum(z, 1).to_vector(), cols = sum(z, 0).to_vector();
    for (std::size_t i = 0; i <= n; ++i) EXPECT_NEAR(rows[i], i < n ? 1.0 : double(m), 1e-4);
    for (std::size_t j = 0; j <= m; ++j) EXPECT_NEAR(cols[j], j < m ? 1.0 : double(n), 1e-4);
  }
}

TEST(Sinkhorn, ThreeIterationsStayInUnitInterval) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ConfidenceMatrix c = sinkhorn_ot(random_tensor({8, 8}, seed, -10, 10), 3, Tensor::from_data({1}, {1}));
    for (real p : c.prob.values()) {
      ASSERT_TRUE(std::isfinite(p));
      ASSERT_GE(p, 0);
      ASSERT_LE(p, 1);
    }
  }
}

TEST(Sinkhorn, MatchesDoublePrecisionReference) {
  const std::size_t n = 3, m = 4;
  const Tensor s = random_tensor({n, m}, 7, -2, 2);
  const double alpha = 0.3;
  // Augmented log-kernel and plain log-domain iterations in double.
  std::vector<double> z((n + 1) * (m + 1), alpha), u(n + 1, 0), v(m + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) z[i * (m + 1) + j] = s.values()[i * m + j];
  auto lse = [](const std::vector<double>& xs) {
    double mx = *std::max_element(xs.begin(), xs.end()), t = 0;
    for (double x : xs) t += std::exp(x - mx);
    return mx + std::log(t);
  };
  for (int it = 0; it < 3; ++it) {
    for (std::size_t i = 0; i <= n; ++i) {
      std::vector<double> row;
      for (std::size_t j = 0; j <= m; ++j) row.push_back(z[i * (m + 1) + j] + v[j]);
      u[i] = (i < n ? 0.0 : std::log(double(m))) - lse(row);
    }
    for (std::size_t j = 0; j <= m; ++j) {
      std::vector<double> col;
      for (std::size_t i = 0; i <= n; ++i) col.push_back(z[i * (m + 1) + j] + u[i]);
      v[j] = (j < m ? 0.0 : std::log(double(n))) - lse(col);
    }
  }
  const auto got = sinkhorn_ot(s, 3, Tensor::from_data({1}, {real(alpha)})).log_assignment.to_vector();
  for (std::size_t i = 0; i <= n; ++i)
    for (std::size_t j = 0; j <= m; ++j) EXPECT_NEAR(got[i * (m + 1) + j], z[i * (m + 1) + j] + u[i] + v[j], 1e-5);
}

TEST(Sinkhorn, RejectsZeroIterations) {
  EXPECT_THROW(sinkhorn_ot(Tensor::zeros({2, 2}), 0, Tensor::zeros({1})), ConfigError);
}

TEST(SelectMatches, EqualsBruteForceMnnOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t rows = 2 + seed % 9, cols = 3 + seed % 7;
    const Tensor p = dual_softmax(random_tensor({rows, cols}, seed, -4, 4)).prob;
    const double threshold = 0.2;
    PairSet got;
    for (const CoarseMatch& m : select_matches(p, threshold)) got.insert({m.a, m.b});
    EXPECT_EQ(got, mnn_oracle(p.to_vector(), rows, cols, threshold)) << "seed " << seed;
  }
}

TEST(SelectMatches, IdentityConfidenceMatchesDiagonal) {
  std::vector<real> eye(16, 0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 5] = 1;
  const auto matches = select_matches(Tensor::from_data({4, 4}, eye), 0.2);
  ASSERT_EQ(matches.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(matches[i].a, i);
    EXPECT_EQ(matches[i].b, i);
  }
}

TEST(SelectMatches, BelowThresholdYieldsNothing) {
  EXPECT_TRUE(select_matches(Tensor::full({3, 3}, real(0.1)), 0.2).empty());
}

TEST(SelectMatches, IsOneToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto matches = select_matches(dual_softmax(random_tensor({8, 8}, seed, -2, 2)).prob, 0.01);
    std::set<std::size_t> a, b;
    for (const CoarseMatch& m : matches) {
      a.insert(m.a);
      b.insert(m.b);
    }
    EXPECT_EQ(a.size(), matches.size());
    EXPECT_EQ(b.size(), matches.size());
  }
}
