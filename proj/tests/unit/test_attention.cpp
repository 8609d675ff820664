#include <gtest/gtest.h>

#include <cmath>

#include "loftr/attention.hpp"
#include "loftr/model.hpp"
#include "test_util.hpp"

using namespace loftr;
using loftr::testing::max_abs_diff;
using loftr::testing::random_tensor;

namespace {

double phi(double x) { return x > 0 ? x + 1 : std::exp(x); }

// Explicit O(N·M) evaluation of Σ_j φ(q_i)·φ(k_j) v_j / Σ_j φ(q_i)·φ(k_j).
std::vector<double> quadratic_form(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.dim(0), m = k.dim(0), d = q.dim(1), dv = v.dim(1);
  std::vector<double> out(n * dv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < d; ++c) w[j] += phi(q.values()[i * d + c]) * phi(k.values()[j * d + c]);
      total += w[j];
    }
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += w[j] / total * v.values()[j * dv + c];
  }
  return out;
}

ModelParams perturbed_model(const Config& config, std::uint64_t seed) {
  ModelParams m = init_model(config, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (Tensor t : parameter_list(m))
    for (real& v : t.mutable_values()) v += real(dist(rng));
  return m;
}

}  // namespace

TEST(LinearAttention, EqualsQuadraticFormOracle) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 1 + (s * 37) % 256, m = 1 + (s * 91) % 256, d = 1 + s % 16;
    const Tensor q = random_tensor({n, d}, 3 * s), k = random_tensor({m, d}, 3 * s + 1),
                 v = random_tensor({m, d}, 3 * s + 2);
    const auto expected = quadratic_form(q, k, v);
    const auto got = linear_attention(q, k, v).to_vector();
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      worst = std::max(worst, std::abs(got[i] - expected[i]));
      scale = std::max(scale, std::abs(expected[i]));
    }
    EXPECT_LT(worst / scale, 1e-5) << "case " << s;
  }
}

TEST(LinearAttention, SingleKeyReturnsItsValue) {
  const Tensor q = random_tensor({5, 4}, 1), k = random_tensor({1, 4}, 2), v = random_tensor({1, 3}, 3);
  const auto out = linear_attention(q, k, v).to_vector();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out[i * 3 + c], v.values()[c], 1e-6);
}

TEST(VanillaAttention, UniformWhenQueriesAreZero) {
  const Tensor q = Tensor::zeros({2, 4}), k = random_tensor({6, 4}, 4), v = random_tensor({6, 2}, 5);
  const auto out = vanilla_attention(q, k, v).to_vector();
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t j = 0; j < 6; ++j) mean += v.values()[j * 2 + c] / 6.0;
    EXPECT_NEAR(out[c], mean, 1e-6);
  }
}

TEST(Attention, OutputsStayInsideValueHull) {
  const Tensor q = random_tensor({2, 30, 8}, 6, -3, 3), k = random_tensor({2, 40, 8}, 7, -3, 3),
               v = random_tensor({2, 40, 1}, 8);
  for (const Tensor& out : {vanilla_attention(q, k, v), linear_attention(q, k, v)})
    for (std::size_t b = 0; b < 2; ++b) {
      const auto vb = slice(v, 0, b, 1).to_vector();
      const real lo = *std::min_element(vb.begin(), vb.end()), hi = *std::max_element(vb.begin(), vb.end());
      for (real y : slice(out, 0, b, 1).to_vector()) {
        EXPECT_GE(y, lo - 1e-6);
        EXPECT_LE(y, hi + 1e-6);
      }
    }
}

TEST(Attention, RejectsMismatchedShapes) {
  EXPECT_THROW(linear_attention(Tensor::zeros({3, 4}), Tensor::zeros({5, 3}), Tensor::zeros({5, 2})), DimensionError);
  EXPECT_THROW(vanilla_attention(Tensor::zeros({3, 4}), Tensor::zeros({5, 4}), Tensor::zeros({4, 2})), DimensionError);
}

TEST(EncoderLayer, FreshLayerPassesInputThrough) {
  Config config;
  const ModelParams m = init_model(config, 9);
  const Tensor x = random_tensor({1, 12, 64}, 10), src = random_tensor({1, 12, 64}, 11);
  for (AttentionKind kind : {AttentionKind::Linear, AttentionKind::Vanilla, AttentionKind::Conv}) {
    config.coarse_attention = kind;
    const ModelParams mk = init_model(config, 9);
    const AttentionOptions options = coarse_attention_options(config, 3, 4);
    EXPECT_EQ(encoder_layer(x, x, mk.coarse_stack.layers[0], LayerKind::Self, options).to_vector(), x.to_vector());
    if (kind != AttentionKind::Conv)
      EXPECT_EQ(encoder_layer(x, src, mk.coarse_stack.layers[1], LayerKind::Cross, options).to_vector(), x.to_vector());
  }
}

TEST(EncoderLayer, SelfLayerIsPermutationEquivariant) {
  Config config;
  for (AttentionKind kind : {AttentionKind::Linear, AttentionKind::Vanilla}) {
    config.coarse_attention = kind;
    const ModelParams m = perturbed_model(config, 12);
    const Tensor x = random_tensor({16, 64}, 13);
    std::vector<std::ptrdiff_t> perm(16);
    for (std::size_t i = 0; i < 16; ++i) perm[i] = std::ptrdiff_t((i * 7 + 5) % 16);
    const AttentionOptions options = coarse_attention_options(config, 4, 4);
    const Tensor px = gather_rows(x, perm);
    const Tensor a = gather_rows(encoder_layer(x, x, m.coarse_stack.layers[0], LayerKind::Self, options), perm);
    const Tensor b = encoder_layer(px, px, m.coarse_stack.layers[0], LayerKind::Self, options);
    EXPECT_LT(max_abs_diff(a.values(), b.values()), 1e-4);
  }
}

TEST(EncoderLayer, CrossLayerIgnoresSourceOrder) {
  Config config;
  const ModelParams m = perturbed_model(config, 14);
  const Tensor x = random_tensor({10, 64}, 15), src = random_tensor({14, 64}, 16);
  std::vector<std::ptrdiff_t> perm(14);
  for (std::size_t i = 0; i < 14; ++i) perm[i] = std::ptrdiff_t(13 - i);
  const AttentionOptions options = coarse_attention_options(config, 2, 5);
  const Tensor a = encoder_layer(x, src, m.coarse_stack.layers[1], LayerKind::Cross, options);
  const Tensor b = encoder_layer(x, gather_rows(src, perm), m.coarse_stack.layers[1], LayerKind::Cross, options);
  EXPECT_LT(max_abs_diff(a.values(), b.values()), 1e-5);
}

TEST(LoftrStack, SwappingInputsSwapsOutputs) {
  Config config;
  const ModelParams m = perturbed_model(config, 17);
  const Tensor a = random_tensor({2, 16, 64}, 18), b = random_tensor({2, 16, 64}, 19);
  const AttentionOptions options = coarse_attention_options(config, 4, 4);
  const auto [a1, b1] = loftr_stack(a, b, m.coarse_stack, options);
  const auto [b2, a2] = loftr_stack(b, a, m.coarse_stack, options);
  EXPECT_LT(max_abs_diff(a1.values(), a2.values()), 1e-5);
  EXPECT_LT(max_abs_diff(b1.values(), b2.values()), 1e-5);
}

TEST(LoftrStack, PairsInABatchAreIndependent) {
  Config config;
  const ModelParams m = perturbed_model(config, 20);
  const Tensor a = random_tensor({2, 16, 64}, 21), b = random_tensor({2, 16, 64}, 22);
  const AttentionOptions options = coarse_attention_options(config, 4, 4);
  const auto [ab, bb] = loftr_stack(a, b, m.coarse_stack, options);
  const auto [a1, b1] = loftr_stack(slice(a, 0, 1, 1), slice(b, 0, 1, 1), m.coarse_stack, options);
  EXPECT_LT(max_abs_diff(slice(ab, 0, 1, 1).values(), a1.values()), 1e-5);
}

TEST(LoftrStack, HasOneSelfAndOneCrossLayerPerRound) {
  Config config;
  config.n_coarse = 3;
  EXPECT_EQ(init_model(config, 0).coarse_stack.rounds(), 3u);
  EXPECT_EQ(init_model(config, 0).coarse_stack.layers.size(), 6u);
}
