#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "loftr/checkpoint.hpp"
#include "loftr/commands.hpp"
#include "loftr/grad_check.hpp"
#include "loftr/synthetic.hpp"
#include "loftr/training.hpp"

namespace loftr::cli {

namespace {

struct Property {
  std::string name;
  // Empty string on success, otherwise a short description of the failure.
  std::function<std::string()> check;
};

std::string expect(bool ok, const std::string& what) { return ok ? std::string() : what; }

std::string gap_text(const char* label, double value) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s = %.3e", label, value);
  return buf;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = real(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(values));
}

double max_abs_diff(std::span<const real> a, std::span<const real> b) {
  double worst = a.size() == b.size() ? 0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) worst = std::max(worst, std::abs(double(a[i]) - b[i]));
  return worst;
}

Image test_image(std::uint64_t seed, std::size_t h, std::size_t w) { return random_pattern(seed, h, w); }

// Brute-force threshold + mutual-nearest-neighbour selection.
std::set<std::pair<std::size_t, std::size_t>> mnn_oracle(const std::vector<real>& p, std::size_t rows,
                                                         std::size_t cols, double threshold) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const real v = p[i * cols + j];
      if (v < threshold) continue;
      bool best = true;
      for (std::size_t k = 0; k < cols && best; ++k)
        if (p[i * cols + k] > v || (p[i * cols + k] == v && k < j)) best = false;
      for (std::size_t k = 0; k < rows && best; ++k)
        if (p[k * cols + j] > v || (p[k * cols + j] == v && k < i)) best = false;
      if (best) out.insert({i, j});
    }
  return out;
}

Homography test_homography() {
  Eigen::Matrix3d m;
  m << 1.05, 0.04, 3.0, -0.03, 0.97, -2.0, 1e-4, -2e-4, 1.0;
  return Homography(m);
}

std::vector<Property> properties() {
  std::vector<Property> list;
  auto add = [&](std::string name, std::function<std::string()> check) {
    list.push_back({std::move(name), std::move(check)});
  };

  // --- tensor core --------------------------------------------------------
  add("tensor.matmul_matches_naive_product", [] {
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({7, 5}, rng), b = random_tensor({5, 4}, rng);
    const auto c = matmul(a, b).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 5; ++k) s += double(a.values()[i * 5 + k]) * b.values()[k * 4 + j];
        worst = std::max(worst, std::abs(s - c[i * 4 + j]));
      }
    return expect(worst < 1e-5, gap_text("max diff", worst));
  });
  add("tensor.softmax_rows_sum_to_one", [] {
    std::mt19937_64 rng(2);
    const auto p = softmax(random_tensor({6, 9}, rng, -20, 20), 1).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) s += p[i * 9 + j];
      worst = std::max(worst, std::abs(s - 1));
    }
    return expect(worst < 1e-6, gap_text("max |sum - 1|", worst));
  });
  add("tensor.softmax_analytic_case", [] {
    const auto p = softmax(Tensor::from_data({2}, {0, real(std::log(3.0))}), 0).to_vector();
    return expect(std::abs(p[0] - 0.25) < 1e-6 && std::abs(p[1] - 0.75) < 1e-6, "softmax([0, ln 3]) != [1/4, 3/4]");
  });
  add("tensor.feature_map_positive", [] {
    const auto y = elu_plus_one(Tensor::from_data({3}, {-20, 0, 1})).to_vector();
    return expect(y[0] > 0 && std::abs(y[1] - 1) < 1e-7 && std::abs(y[2] - 2) < 1e-7, "elu + 1 values wrong");
  });
  add("tensor.backward_of_square", [] {
    Tensor x = Tensor::parameter({1}, {3});
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(x, x)));
    return expect(std::abs(x.grad()[0] - 6) < 1e-6, "d(x²)/dx at 3 != 6");
  });
  add("tensor.softmax_sum_has_zero_gradient", [] {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({4, 5}, rng);
    x.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(softmax(x, 1)));
    double worst = 0;
    for (real g : x.grad()) worst = std::max(worst, std::abs(double(g)));
    return expect(worst < 1e-6, gap_text("max |grad|", worst));
  });
  add("tensor.backward_is_deterministic", [] {
    std::vector<std::vector<real>> runs;
    for (int r = 0; r < 2; ++r) {
      std::mt19937_64 rng(4);
      Tensor a = random_tensor({6, 6}, rng), b = random_tensor({6, 6}, rng);
      a.set_requires_grad(true);
      Tape tape;
      TapeScope scope(tape);
      tape.backward(sum(log_softmax(matmul(a, b), 1)));
      runs.push_back(a.grad());
    }
    return expect(runs[0] == runs[1], "two identical backward passes differ");
  });
  add("tensor.gradcheck_sum", [] {
    std::mt19937_64 rng(5);
    const GradCheckResult r = grad_check([](const Tensor& x) { return sum(x); }, random_tensor({3, 4}, rng));
    return expect(r.max_rel_err < 1e-3, gap_text("max rel err", r.max_rel_err));
  });
  add("tensor.gradcheck_half_squared_norm", [] {
    std::mt19937_64 rng(6);
    const GradCheckResult r =
        grad_check([](const Tensor& x) { return scale(sum(mul(x, x)), real(0.5)); }, random_tensor({3, 4}, rng));
    return expect(r.max_rel_err < 1e-3, gap_text("max rel err", r.max_rel_err));
  });

  // --- features ------------------------------------------------------------
  add("features.coarse_cells_match_patch_oracle", [] {
    Config config;
    const ModelParams m = init_model(config, 7);
    const Image img = test_image(8, 32, 24);
    const FeatureMaps f = extract(img, m.backbone);
    const std::size_t d = config.d_coarse;
    const auto w = m.backbone.coarse_weight.values();
    const auto out = f.coarse.values();
    double worst = 0;
    for (std::size_t cy = 0; cy < 4; ++cy)
      for (std::size_t cx = 0; cx < 3; ++cx)
        for (std::size_t c = 0; c < d; ++c) {
          double s = m.backbone.coarse_bias.values()[c];
          for (std::size_t k = 0; k < 64; ++k) s += double(img.at(cy * 8 + k / 8, cx * 8 + k % 8)) * w[k * d + c];
          worst = std::max(worst, std::abs(s - out[(cy * 3 + cx) * d + c]));
        }
    return expect(worst < 1e-5, gap_text("max diff", worst));
  });
  add("features.extract_shift_equivariance", [] {
    const ModelParams m = init_model(Config{}, 9);
    const Image img = test_image(10, 40, 40);
    Image shifted = Image::filled(40, 40, 0);
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 8; x < 40; ++x) shifted.at(y, x) = img.at(y, x - 8);
    const FeatureMaps a = extract(img, m.backbone), b = extract(shifted, m.backbone);
    const std::size_t d = m.backbone.coarse_bias.numel();
    double worst = 0;
    for (std::size_t cy = 0; cy < 5; ++cy)
      for (std::size_t cx = 0; cx + 1 < 5; ++cx)
        for (std::size_t c = 0; c < d; ++c)
          worst = std::max(worst, std::abs(double(a.coarse.values()[(cy * 5 + cx) * d + c]) -
                                           b.coarse.values()[(cy * 5 + cx + 1) * d + c]));
    return expect(worst < 1e-6, gap_text("max diff", worst));
  });
  add("features.positional_encoding_norm", [] {
    const std::size_t d = 64;
    const auto pe = positional_encoding(16, 16, d).to_vector();
    double worst = 0;
    for (std::size_t p = 0; p < 256; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += double(pe[p * d + c]) * pe[p * d + c];
      worst = std::max(worst, std::abs(s - d / 2.0));
    }
    return expect(worst < 1e-5 * d, gap_text("max |norm² - d/2|", worst));
  });
  add("features.positional_encoding_distinct", [] {
    const std::size_t d = 16;
    const auto pe = positional_encoding(16, 16, d).to_vector();
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < 256; ++p)
      for (std::size_t q = p + 1; q < 256; ++q) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += std::pow(double(pe[p * d + c]) - pe[q * d + c], 2);
        closest = std::min(closest, s);
      }
    return expect(closest > 0, "two grid positions share an encoding");
  });

  // --- attention -----------------------------------------------------------
  add("attention.linear_equals_quadratic_form", [] {
    double worst = 0;
    for (std::uint64_t s = 0; s < 5; ++s) worst = std::max(worst, linear_attention_oracle_gap(32 + 16 * s, 8, s));
    return expect(worst < 1e-5, gap_text("max rel diff", worst));
  });
  add("attention.vanilla_equals_weight_matrix", [] {
    std::mt19937_64 rng(11);
    const Tensor q = random_tensor({6, 4}, rng), k = random_tensor({9, 4}, rng), v = random_tensor({9, 3}, rng);
    const auto out = vanilla_attention(q, k, v).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<double> w(9);
      double total = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += double(q.values()[i * 4 + c]) * k.values()[j * 4 + c];
        total += w[j] = std::exp(s);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < 9; ++j) acc += w[j] / total * v.values()[j * 3 + c];
        worst = std::max(worst, std::abs(acc - out[i * 3 + c]));
      }
    }
    return expect(worst < 1e-5, gap_text("max diff", worst));
  });
  add("attention.outputs_in_value_hull", [] {
    std::mt19937_64 rng(12);
    const Tensor q = random_tensor({20, 8}, rng), k = random_tensor({30, 8}, rng), v = random_tensor({30, 1}, rng);
    const real lo = *std::min_element(v.values().begin(), v.values().end());
    const real hi = *std::max_element(v.values().begin(), v.values().end());
    for (const Tensor& out : {vanilla_attention(q, k, v), linear_attention(q, k, v)})
      for (real y : out.values())
        if (y < lo - 1e-6 || y > hi + 1e-6) return std::string("output outside [min v, max v]");
    return std::string();
  });
  add("attention.fresh_layer_is_identity", [] {
    Config config;
    const ModelParams m = init_model(config, 13);
    std::mt19937_64 rng(14);
    const Tensor x = random_tensor({10, config.d_coarse}, rng), y = random_tensor({10, config.d_coarse}, rng);
    const Tensor out = encoder_layer(x, y, m.coarse_stack.layers[1], LayerKind::Cross,
                                     coarse_attention_options(config, 2, 5));
    return expect(max_abs_diff(out.values(), x.values()) == 0, "zero-initialized layer changed its input");
  });
  add("attention.self_layer_permutation_equivariant", [] {
    Config config;
    ModelParams m = init_model(config, 15);
    std::mt19937_64 rng(16);
    for (Tensor t : parameter_list(m))
      for (real& v : t.mutable_values()) v += real(std::uniform_real_distribution<double>(-0.1, 0.1)(rng));
    const std::size_t n = 12, d = config.d_coarse;
    const Tensor x = random_tensor({n, d}, rng);
    std::vector<std::ptrdiff_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = std::ptrdiff_t((i * 5 + 3) % n);
    const AttentionOptions options = coarse_attention_options(config, 3, 4);
    const Tensor px = gather_rows(x, perm);
    const Tensor a = gather_rows(encoder_layer(x, x, m.coarse_stack.layers[0], LayerKind::Self, options), perm);
    const Tensor b = encoder_layer(px, px, m.coarse_stack.layers[0], LayerKind::Self, options);
    const double gap = max_abs_diff(a.values(), b.values());
    return expect(gap < 1e-4, gap_text("max diff", gap));
  });
  add("attention.stack_symmetric_under_swap", [] {
    Config config;
    ModelParams m = init_model(config, 17);
    std::mt19937_64 rng(18);
    for (Tensor t : parameter_list(m))
      for (real& v : t.mutable_values()) v += real(std::uniform_real_distribution<double>(-0.1, 0.1)(rng));
    const Tensor a = random_tensor({1, 16, config.d_coarse}, rng), b = random_tensor({1, 16, config.d_coarse}, rng);
    const AttentionOptions options = coarse_attention_options(config, 4, 4);
    const auto [a1, b1] = loftr_stack(a, b, m.coarse_stack, options);
    const auto [b2, a2] = loftr_stack(b, a, m.coarse_stack, options);
    const double gap = std::max(max_abs_diff(a1.values(), a2.values()), max_abs_diff(b1.values(), b2.values()));
    return expect(gap < 1e-5, gap_text("max diff", gap));
  });

  // --- coarse matching -------------------------------------------------------
  add("matching.score_matrix_oracle", [] {
    std::mt19937_64 rng(19);
    const Tensor a = random_tensor({5, 8}, rng), b = random_tensor({6, 8}, rng);
    const auto s = score_matrix(a, b, 0.1).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < 8; ++c) dot += double(a.values()[i * 8 + c]) * b.values()[j * 8 + c];
        worst = std::max(worst, std::abs(dot / 0.1 - s[i * 6 + j]));
      }
    return expect(worst < 1e-4, gap_text("max diff", worst));
  });
  add("matching.dual_softmax_factors_sum_to_one", [] {
    std::mt19937_64 rng(20);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      const Tensor s = random_tensor({7, 9}, rng, -10, 10);
      const ConfidenceMatrix c = dual_softmax(s);
      // Dividing out one factor must leave the other, which sums to 1.
      const auto row_factor = exp(sub(c.log_prob, log_softmax(s, 0))).to_vector();
      const auto col_factor = exp(sub(c.log_prob, log_softmax(s, 1))).to_vector();
      for (std::size_t i = 0; i < 7; ++i) {
        double r = 0;
        for (std::size_t j = 0; j < 9; ++j) r += row_factor[i * 9 + j];
        worst = std::max(worst, std::abs(r - 1));
      }
      for (std::size_t j = 0; j < 9; ++j) {
        double col = 0;
        for (std::size_t i = 0; i < 7; ++i) col += col_factor[i * 9 + j];
        worst = std::max(worst, std::abs(col - 1));
      }
    }
    return expect(worst < 1e-5, gap_text("max |sum - 1|", worst));
  });
  add("matching.dual_softmax_diagonal_case", [] {
    const auto p = dual_softmax(Tensor::from_data({2, 2}, {10, 0, 0, 10})).prob.to_vector();
    const double on = std::pow(1 / (1 + std::exp(-10.0)), 2), off = std::pow(std::exp(-10.0) / (1 + std::exp(-10.0)), 2);
    return expect(std::abs(p[0] - on) < 1e-6 && std::abs(p[3] - on) < 1e-6 && std::abs(p[1] - off) < 1e-9,
                  "confidence of [[10,0],[0,10]] wrong");
  });
  add("matching.sinkhorn_meets_marginals", [] {
    std::mt19937_64 rng(21);
    const std::size_t n = 6, m = 8;
    const ConfidenceMatrix c =
        sinkhorn_ot(random_tensor({n, m}, rng, -3, 3), 100, Tensor::from_data({1}, {1}));
    const auto z = exp(c.log_assignment).to_vector();
    double worst = 0;
    for (std::size_t i = 0; i <= n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j <= m; ++j) s += z[i * (m + 1) + j];
      worst = std::max(worst, std::abs(s - (i < n ? 1.0 : double(m))));
    }
    for (std::size_t j = 0; j <= m; ++j) {
      double s = 0;
      for (std::size_t i = 0; i <= n; ++i) s += z[i * (m + 1) + j];
      worst = std::max(worst, std::abs(s - (j < m ? 1.0 : double(n))));
    }
    return expect(worst < 1e-4, gap_text("max marginal error", worst));
  });
  add("matching.sinkhorn_three_iterations_in_unit_interval", [] {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 10; ++t) {
      const ConfidenceMatrix c = sinkhorn_ot(random_tensor({8, 8}, rng, -10, 10), 3, Tensor::from_data({1}, {1}));
      for (real p : c.prob.values())
        if (!std::isfinite(p) || p < 0 || p > 1) return gap_text("entry", p);
    }
    return std::string();
  });
  add("matching.select_matches_equals_mnn_oracle", [] {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 50; ++t) {
      const std::size_t rows = 3 + t % 7, cols = 4 + t % 5;
      const Tensor p = dual_softmax(random_tensor({rows, cols}, rng, -5, 5)).prob;
      const double threshold = 0.05 * (t % 5);
      std::set<std::pair<std::size_t, std::size_t>> got;
      for (const CoarseMatch& m : select_matches(p, threshold)) got.insert({m.a, m.b});
      if (got != mnn_oracle(p.to_vector(), rows, cols, threshold)) return "matrix " + std::to_string(t) + " differs";
    }
    return std::string();
  });
  add("matching.select_matches_one_to_one", [] {
    const Tensor p = Tensor::full({5, 5}, real(0.5));
    const auto matches = select_matches(p, 0.2);
    std::set<std::size_t> as, bs;
    for (const CoarseMatch& m : matches) as.insert(m.a), bs.insert(m.b);
    return expect(as.size() == matches.size() && bs.size() == matches.size() && matches.size() == 1,
                  "ties must yield a single mutual match");
  });

  // --- fine refinement ---------------------------------------------------------
  add("refine.delta_heatmap_exact_offset", [] {
    std::vector<real> h(25, 0);
    h[3 * 5 + 1] = 1;
    const Refinement r = heatmap_moments(Tensor::from_data({1, 25}, h), 5);
    const auto e = r.expectation.to_vector();
    return expect(e[0] == -1 && e[1] == 1 && r.variance.values()[0] == 0, "delta heatmap moments wrong");
  });
  add("refine.uniform_heatmap_variance_four", [] {
    const Refinement r = heatmap_moments(Tensor::full({1, 25}, real(1) / 25), 5);
    const auto e = r.expectation.to_vector();
    return expect(std::abs(e[0]) < 1e-6 && std::abs(e[1]) < 1e-6 && std::abs(r.variance.values()[0] - 4) < 1e-5,
                  "uniform 5x5 heatmap must give zero offset and variance 4");
  });
  add("refine.symmetric_heatmap_zero_offset", [] {
    std::mt19937_64 rng(25);
    std::vector<real> h(25);
    double total = 0;
    for (std::size_t i = 0; i <= 12; ++i) total += 2 * (h[i] = h[24 - i] = real(std::uniform_real_distribution<double>(0, 1)(rng)));
    for (real& v : h) v = real(v / total);
    const auto e = heatmap_moments(Tensor::from_data({1, 25}, h), 5).expectation.to_vector();
    return expect(std::abs(e[0]) < 1e-6 && std::abs(e[1]) < 1e-6, gap_text("offset", std::hypot(e[0], e[1])));
  });
  add("refine.fine_center_maps_to_cell_center", [] {
    for (std::size_t cell = 0; cell < 64; ++cell) {
      const Point2 p = fine_to_image(locate_fine_center(cell, 8, 8));
      if (p.x != 8.0 * double(cell % 8) + 3.5 || p.y != 8.0 * double(cell / 8) + 3.5)
        return "cell " + std::to_string(cell);
    }
    return std::string();
  });

  // --- training labels and losses ------------------------------------------------
  add("training.identity_truth_matches_every_cell", [] {
    const auto truth = gt_coarse_matches(Homography(), 64, 64);
    bool ok = truth.size() == 64;
    for (const CellPair& c : truth) ok = ok && c.a == c.b;
    return expect(ok, "identity ground truth is not the diagonal");
  });
  add("training.translation_truth_shifts_one_cell", [] {
    const auto truth = gt_coarse_matches(Homography::translation(8, 0), 64, 64);
    bool ok = truth.size() == 56;
    for (const CellPair& c : truth) ok = ok && c.b == c.a + 1 && c.a % 8 != 7;
    return expect(ok, "8 px translation must shift matches by one column");
  });
  add("training.truth_symmetric_under_swap", [] {
    const WarpModel g = random_geometry(26, 64, 64, GeometryRanges{});
    std::set<std::pair<std::size_t, std::size_t>> forward, backward;
    for (const CellPair& c : gt_coarse_matches(g, 64, 64)) forward.insert({c.a, c.b});
    for (const CellPair& c : gt_coarse_matches(inverse(g), 64, 64)) backward.insert({c.b, c.a});
    return expect(forward == backward, "ground truth changes when the pair is swapped");
  });
  add("training.coarse_loss_analytic", [] {
    ConfidenceMatrix c;
    const real p = real(std::exp(-1.0));
    c.prob = Tensor::from_data({1, 2, 2}, {p, 0, 0, p});
    c.log_prob = log(c.prob);
    const LossTerm loss = coarse_loss(c, {{{0, 0}, {1, 1}}});
    return expect(std::abs(loss.value.item() - 1) < 1e-6, "mean -log(1/e) must be 1");
  });
  add("training.fine_loss_analytic", [] {
    const Tensor e = Tensor::from_data({1, 2}, {1, 0});
    const Tensor v = Tensor::from_data({1}, {2});
    const LossTerm loss = fine_loss(e, v, {Point2{0, 0}});
    return expect(std::abs(loss.value.item() - 0.5) < 1e-6, "|(1,0)|² / 2 must be 0.5");
  });

  // --- geometry ----------------------------------------------------------------
  add("geometry.warp_inverse_round_trip", [] {
    const Homography h = test_homography();
    double worst = 0;
    for (double x = 0; x < 64; x += 7)
      for (double y = 0; y < 64; y += 5) {
        const Point2 q = warp_point(h.inverse(), warp_point(h, {x, y}));
        worst = std::max(worst, std::hypot(q.x - x, q.y - y));
      }
    return expect(worst < 1e-6, gap_text("max error", worst));
  });
  add("geometry.dlt_recovers_known_homography", [] {
    const Homography h = test_homography();
    std::vector<Correspondence> c;
    for (Point2 p : {Point2{0, 0}, Point2{63, 2}, Point2{60, 61}, Point2{4, 58}}) c.push_back({p, warp_point(h, p)});
    const double gap = (dlt_homography(c).matrix() - h.matrix()).cwiseAbs().maxCoeff();
    return expect(gap < 1e-6, gap_text("max entry diff", gap));
  });
  add("geometry.dlt_rejects_collinear_points", [] {
    std::vector<Correspondence> c;
    for (double t = 0; t < 4; ++t) c.push_back({{t, 2 * t}, {t + 1, 2 * t}});
    try {
      dlt_homography(c);
    } catch (const GeometryError&) {
      return std::string();
    }
    return std::string("collinear input accepted");
  });
  add("geometry.ransac_survives_outliers", [] {
    const Homography h = test_homography();
    std::mt19937_64 rng(27);
    std::uniform_real_distribution<double> coord(0, 480);
    std::vector<Correspondence> c;
    for (int i = 0; i < 100; ++i) {
      const Point2 p{coord(rng), coord(rng)};
      c.push_back({p, i % 10 < 3 ? Point2{coord(rng), coord(rng)} : warp_point(h, p)});
    }
    const RansacResult r = ransac_homography(c, {3.0, 1000, 28});
    if (!r.success) return std::string("estimation failed");
    const double err = corner_error(r.homography, h, 480, 480);
    return expect(err < 1, gap_text("corner error", err));
  });
  add("geometry.auc_analytic_cases", [] {
    const std::vector<double> zeros(5, 0.0), above(5, 11.0), half{5.0};
    return expect(auc(zeros, 10) == 1.0 && auc(above, 10) == 0.0 && auc(half, 10) == 0.5,
                  "AUC of {0}, {>t}, {t/2} must be 1, 0, 0.5");
  });
  add("geometry.auc_scale_invariant", [] {
    const std::vector<double> e{0.3, 1.7, 2.2, 4.9, 8.0, 12.0};
    std::vector<double> scaled;
    for (double v : e) scaled.push_back(2.5 * v);
    const double gap = std::abs(auc(e, 5) - auc(scaled, 12.5));
    return expect(gap < 1e-12, gap_text("difference", gap));
  });
  add("geometry.planar_scene_matches_induced_homography", [] {
    const WarpModel g = random_geometry(29, 64, 64, GeometryRanges{GeometryKind::PlanarScene});
    const PlanarScene& scene = std::get<PlanarScene>(g);
    const Homography h = scene.induced_homography();
    double worst = 0;
    for (double x = 0; x < 64; x += 9)
      for (double y = 0; y < 64; y += 9) {
        const Point2 a = scene.reproject({x, y}), b = warp_point(h, {x, y});
        worst = std::max(worst, std::hypot(a.x - b.x, a.y - b.y));
      }
    return expect(worst < 1e-9, gap_text("max diff", worst));
  });

  // --- formats -------------------------------------------------------------------
  add("cli.checkpoint_round_trip_bit_identical", [] {
    Config config;
    config.d_coarse = 16;
    config.d_fine = 8;
    config.heads = 2;
    const ModelParams m = init_model(config, 30);
    std::ostringstream first, second;
    write_checkpoint(first, config, m);
    std::istringstream in(first.str());
    const Checkpoint loaded = read_checkpoint(in);
    write_checkpoint(second, loaded.config, loaded.params);
    return expect(first.str() == second.str(), "save/load/save changed bytes");
  });
  add("cli.config_text_round_trip", [] {
    Config config;
    config.temperature = 0.07;
    config.matcher = MatcherKind::OptimalTransport;
    config.geometry.max_rotation_deg = 12.5;
    return expect(format_config(parse_config(format_config(config))) == format_config(config),
                  "config text does not round-trip");
  });
  add("cli.config_rejects_unknown_key", [] {
    try {
      parse_config("no_such_key=1\n");
    } catch (const ConfigError&) {
      return std::string();
    }
    return std::string("unknown key accepted");
  });

  return list;
}

}  // namespace

int cmd_selftest(const Config& config, std::ostream& out) {
  config.validate();
  const std::vector<Property> list = properties();
  std::size_t failed = 0;
  for (const Property& p : list) {
    std::string detail;
    try {
      detail = p.check();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    out << (detail.empty() ? "PASS " : "FAIL ") << p.name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    failed += !detail.empty();
  }
  out << list.size() - failed << "/" << list.size() << " properties passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace loftr::cli
