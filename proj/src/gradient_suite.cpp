#include "loftr/gradient_suite.hpp"

#include <random>

#include "loftr/grad_check.hpp"
#include "loftr/training.hpp"

namespace loftr::LOFTR_PRECISION {

namespace {

using Rng = std::mt19937_64;

Tensor random_values(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<real> v(shape_numel(shape));
  for (real& x : v) x = static_cast<real>(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor leaf(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t = random_values(std::move(shape), rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

struct Case {
  std::function<Tensor()> f;
  std::vector<Tensor> params;
};

class Suite {
 public:
  explicit Suite(double tolerance) : tolerance_(tolerance) {}

  void check(const std::string& name, std::size_t trials, const std::function<Case(Rng&)>& make) {
    GradientCheckEntry entry;
    entry.name = name;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(1000 + 31 * t + entries_.size());
      Case c = make(rng);
      const GradCheckResult r = grad_check(c.f, c.params);
      if (r.max_rel_err >= entry.max_rel_err) {
        entry.max_rel_err = r.max_rel_err;
        entry.worst_analytic = r.worst_analytic;
        entry.worst_numeric = r.worst_numeric;
      }
      entry.components += r.components;
    }
    entry.passed = entry.max_rel_err < tolerance_;
    entries_.push_back(entry);
  }

  std::vector<GradientCheckEntry> entries() const { return entries_; }

 private:
  double tolerance_;
  std::vector<GradientCheckEntry> entries_;
};

// Unary primitive applied to one random leaf.
std::function<Case(Rng&)> unary(Shape shape, std::function<Tensor(const Tensor&)> op, double lo = -1, double hi = 1) {
  return [=](Rng& rng) {
    Tensor x = leaf(shape, rng, lo, hi);
    Tensor w = random_values(op(x.detach()).shape(), rng);
    return Case{[=] { return sum(mul(op(x), w)); }, {x}};
  };
}

std::function<Case(Rng&)> binary(Shape sa, Shape sb, std::function<Tensor(const Tensor&, const Tensor&)> op,
                                 double lo_b = -1, double hi_b = 1) {
  return [=](Rng& rng) {
    Tensor a = leaf(sa, rng);
    Tensor b = leaf(sb, rng, lo_b, hi_b);
    Tensor w = random_values(op(a.detach(), b.detach()).shape(), rng);
    return Case{[=] { return sum(mul(op(a, b), w)); }, {a, b}};
  };
}

// Random non-trivial parameters: nonzero final layers and perturbed norms.
void randomize(const ModelParams& params, Rng& rng, double magnitude) {
  std::uniform_real_distribution<double> dist(-magnitude, magnitude);
  for (Tensor t : parameter_list(params)) {
    for (real& v : t.mutable_values()) v += static_cast<real>(dist(rng));
  }
}

Config toy_config() {
  Config c;
  c.d_coarse = 8;
  c.d_fine = 4;
  c.heads = 2;
  c.n_coarse = 1;
  c.n_fine = 1;
  c.window = 3;
  c.image_height = 32;
  c.image_width = 32;
  c.fine_supervision = FineSupervision::Truth;
  c.geometry.max_rotation_deg = 5;
  c.geometry.max_translation = 4;
  c.geometry.max_corner_jitter = 1;
  return c;
}

EncoderLayerParams random_layer(Rng& rng, std::size_t d, AttentionKind kind) {
  Config c;
  c.d_coarse = d;
  c.heads = 2;
  c.n_coarse = 1;
  c.coarse_attention = kind;
  ModelParams m = init_model(c, rng());
  randomize(m, rng, 0.3);
  return m.coarse_stack.layers[0];
}

std::vector<Tensor> layer_tensors(const EncoderLayerParams& p) {
  std::vector<Tensor> out;
  for (const Tensor* t : {&p.w_query, &p.w_key, &p.w_value, &p.w_merge, &p.conv_weight, &p.norm1_gain, &p.norm1_bias,
                          &p.ffn_in, &p.ffn_out, &p.norm2_gain, &p.norm2_bias})
    if (t->defined()) out.push_back(*t);
  return out;
}

}  // namespace

std::vector<GradientCheckEntry> run_gradient_suite(double tolerance) {
  Suite s(tolerance);
  constexpr std::size_t kTrials = 10;

  // tensor primitives
  s.check("matmul", kTrials, binary({4, 3}, {3, 5}, [](auto& a, auto& b) { return matmul(a, b); }));
  s.check("matmul_batched", kTrials, binary({2, 3, 4}, {2, 4, 3}, [](auto& a, auto& b) { return matmul(a, b); }));
  s.check("matmul_shared_rhs", kTrials, binary({2, 3, 4}, {4, 2}, [](auto& a, auto& b) { return matmul(a, b); }));
  s.check("matmul_nt", kTrials, binary({2, 3, 4}, {2, 5, 4}, [](auto& a, auto& b) { return matmul_nt(a, b); }));
  s.check("matmul_tn", kTrials, binary({2, 4, 3}, {2, 4, 5}, [](auto& a, auto& b) { return matmul_tn(a, b); }));
  s.check("transpose", kTrials, unary({2, 3, 4}, [](auto& x) { return transpose(x); }));
  s.check("add", kTrials, binary({3, 4}, {4}, [](auto& a, auto& b) { return add(a, b); }));
  s.check("sub", kTrials, binary({2, 3, 4}, {3, 1}, [](auto& a, auto& b) { return sub(a, b); }));
  s.check("mul", kTrials, binary({3, 4}, {3, 4}, [](auto& a, auto& b) { return mul(a, b); }));
  s.check("div", kTrials, binary({3, 4}, {3, 1}, [](auto& a, auto& b) { return div(a, b); }, 0.5, 2.0));
  s.check("scale", kTrials, unary({3, 4}, [](auto& x) { return scale(x, real(-2.5)); }));
  s.check("add_scalar", kTrials, unary({3, 4}, [](auto& x) { return add_scalar(x, real(0.7)); }));
  s.check("exp", kTrials, unary({3, 4}, [](auto& x) { return exp(x); }));
  s.check("log", kTrials, unary({3, 4}, [](auto& x) { return log(x); }, 0.5, 2.0));
  s.check("elu", kTrials, unary({3, 4}, [](auto& x) { return elu(x); }, -2, 2));
  s.check("elu_plus_one", kTrials, unary({3, 4}, [](auto& x) { return elu_plus_one(x); }, -2, 2));
  s.check("softmax", kTrials, unary({3, 5}, [](auto& x) { return softmax(x, 1); }, -3, 3));
  s.check("softmax_middle_axis", kTrials, unary({2, 4, 3}, [](auto& x) { return softmax(x, 1); }, -3, 3));
  s.check("log_softmax", kTrials, unary({3, 5}, [](auto& x) { return log_softmax(x, 0); }, -3, 3));
  s.check("logsumexp", kTrials, unary({2, 3, 4}, [](auto& x) { return logsumexp(x, 2); }, -3, 3));
  s.check("sum", kTrials, unary({3, 4}, [](auto& x) { return mul(sum(x), sum(x)); }));
  s.check("sum_axis", kTrials, unary({2, 3, 4}, [](auto& x) { return sum(x, 1); }));
  s.check("mean", kTrials, unary({3, 4}, [](auto& x) { return exp(mean(x)); }));
  s.check("mean_axis", kTrials, unary({2, 3, 4}, [](auto& x) { return mean(x, 2); }));
  s.check("layer_norm", kTrials, [](Rng& rng) {
    Tensor x = leaf({2, 3, 6}, rng), g = leaf({6}, rng, 0.5, 1.5), b = leaf({6}, rng);
    Tensor w = random_values({2, 3, 6}, rng);
    return Case{[=] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b}};
  });
  s.check("l2_normalize", kTrials, unary({4, 5}, [](auto& x) { return l2_normalize(x); }));
  s.check("reshape", kTrials, unary({2, 6}, [](auto& x) { return exp(reshape(x, {3, 4})); }));
  s.check("slice", kTrials, unary({4, 5}, [](auto& x) { return slice(x, 1, 1, 3); }));
  s.check("concat", kTrials, binary({2, 3}, {2, 4}, [](auto& a, auto& b) { return concat({a, b}, 1); }));
  s.check("gather_rows", kTrials, unary({5, 3}, [](auto& x) { return gather_rows(x, {4, 0, -1, 4, 2}); }));
  s.check("split_heads", kTrials, unary({2, 3, 8}, [](auto& x) { return split_heads(x, 2); }));
  s.check("merge_heads", kTrials, unary({4, 3, 4}, [](auto& x) { return merge_heads(x, 2); }));

  // attention
  s.check("vanilla_attention", kTrials, [](Rng& rng) {
    Tensor q = leaf({5, 4}, rng), k = leaf({6, 4}, rng), v = leaf({6, 4}, rng);
    Tensor w = random_values({5, 4}, rng);
    return Case{[=] { return sum(mul(vanilla_attention(q, k, v), w)); }, {q, k, v}};
  });
  s.check("linear_attention", kTrials, [](Rng& rng) {
    Tensor q = leaf({2, 5, 4}, rng), k = leaf({2, 6, 4}, rng), v = leaf({2, 6, 4}, rng);
    Tensor w = random_values({2, 5, 4}, rng);
    return Case{[=] { return sum(mul(linear_attention(q, k, v), w)); }, {q, k, v}};
  });
  for (AttentionKind kind : {AttentionKind::Linear, AttentionKind::Vanilla, AttentionKind::Conv}) {
    const std::string label = kind == AttentionKind::Linear ? "linear" : kind == AttentionKind::Vanilla ? "vanilla" : "conv";
    s.check("encoder_layer_cross_" + label, 3, [kind](Rng& rng) {
      const EncoderLayerParams p = random_layer(rng, 8, kind);
      Tensor x = leaf({2, 9, 8}, rng), src = leaf({2, 9, 8}, rng);
      std::vector<Tensor> params = layer_tensors(p);
      params.push_back(x);
      params.push_back(src);
      AttentionOptions opt;
      opt.kind = kind;
      opt.heads = 2;
      opt.grid_height = opt.grid_width = 3;
      Tensor w = random_values({2, 9, 8}, rng);
      return Case{[=] { return sum(mul(encoder_layer(x, src, p, LayerKind::Cross, opt), w)); }, params};
    });
  }
  s.check("loftr_stack", 3, [](Rng& rng) {
    Config c = toy_config();
    ModelParams m = init_model(c, rng());
    randomize(m, rng, 0.3);
    Tensor a = leaf({16, 8}, rng), b = leaf({16, 8}, rng);
    std::vector<Tensor> params;
    for (const auto& layer : m.coarse_stack.layers)
      for (const Tensor& t : layer_tensors(layer)) params.push_back(t);
    params.push_back(a);
    params.push_back(b);
    Tensor wa = random_values({16, 8}, rng), wb = random_values({16, 8}, rng);
    const AttentionOptions opt = coarse_attention_options(c, 4, 4);
    return Case{[=] {
                  auto [ya, yb] = loftr_stack(a, b, m.coarse_stack, opt);
                  return add(sum(mul(ya, wa)), sum(mul(yb, wb)));
                },
                params};
  });

  // features
  s.check("extract", 3, [](Rng& rng) {
    Config c = toy_config();
    ModelParams m = init_model(c, rng());
    randomize(m, rng, 0.3);
    const Image image = random_pattern(rng(), 16, 16);
    Tensor wc = random_values({4, 8}, rng), wf = random_values({64, 4}, rng);
    const BackboneParams bb = m.backbone;
    return Case{[=] {
                  const FeatureMaps f = extract(image, bb);
                  return add(sum(mul(f.coarse, wc)), sum(mul(f.fine, wf)));
                },
                {bb.coarse_weight, bb.coarse_bias, bb.fine_weight, bb.fine_bias}};
  });

  // coarse matching
  s.check("dual_softmax", kTrials, [](Rng& rng) {
    Tensor fa = leaf({4, 6}, rng), fb = leaf({4, 6}, rng);
    Tensor w = random_values({4, 4}, rng);
    return Case{[=] { return sum(mul(dual_softmax(score_matrix(fa, fb, 0.5)).log_prob, w)); }, {fa, fb}};
  });
  s.check("sinkhorn_ot", kTrials, [](Rng& rng) {
    Tensor scores = leaf({4, 4}, rng, -2, 2), bin = leaf({1}, rng);
    Tensor w = random_values({5, 5}, rng);
    return Case{[=] { return sum(mul(sinkhorn_ot(scores, 3, bin).log_assignment, w)); }, {scores, bin}};
  });

  // fine refinement
  s.check("refine", 3, [](Rng& rng) {
    Config c = toy_config();
    ModelParams m = init_model(c, rng());
    randomize(m, rng, 0.3);
    Tensor wa = leaf({2, 9, 4}, rng), wb = leaf({2, 9, 4}, rng);
    std::vector<Tensor> params{wa, wb};
    for (const auto& layer : m.fine.stack.layers)
      for (const Tensor& t : layer_tensors(layer)) params.push_back(t);
    Tensor w = random_values({2, 2}, rng), wv = random_values({2}, rng);
    const AttentionOptions opt = fine_attention_options(c);
    return Case{[=] {
                  const Refinement r = refine(wa, wb, m.fine.stack, opt, 3);
                  return add(sum(mul(r.expectation, w)), sum(mul(r.variance, wv)));
                },
                params};
  });

  // losses
  s.check("coarse_loss", kTrials, [](Rng& rng) {
    Tensor scores = leaf({4, 4}, rng, -2, 2);
    const std::vector<std::vector<CellPair>> truth{{{0, 1}, {2, 3}}};
    return Case{[=] { return coarse_loss(dual_softmax(scores), truth).value; }, {scores}};
  });
  s.check("coarse_loss_optimal_transport", kTrials, [](Rng& rng) {
    Tensor scores = leaf({4, 4}, rng, -2, 2), bin = leaf({1}, rng);
    const std::vector<std::vector<CellPair>> truth{{{0, 1}, {2, 3}}};
    return Case{[=] { return coarse_loss(sinkhorn_ot(scores, 3, bin), truth).value; }, {scores, bin}};
  });
  s.check("fine_loss_frozen_variance", kTrials, [](Rng& rng) {
    Tensor logits = leaf({3, 9}, rng, -2, 2);
    const std::vector<std::optional<Point2>> targets{Point2{0.3, -0.4}, std::nullopt, Point2{-1.0, 0.8}};
    std::vector<real> frozen;
    {
      NoTapeScope none;
      const auto v = heatmap_moments(softmax(logits, 1), 3).variance.values();
      frozen.assign(v.begin(), v.end());
    }
    return Case{[=] {
                  const Refinement r = heatmap_moments(softmax(logits, 1), 3);
                  return fine_loss(r.expectation, r.variance, targets, &frozen).value;
                },
                {logits}};
  });
  s.check("total_loss_toy_pipeline", 2, [](Rng& rng) {
    Config c = toy_config();
    ModelParams m = init_model(c, rng());
    randomize(m, rng, 0.2);
    std::vector<SyntheticPair> batch{synth_pair(rng(), 32, 32, c.geometry)};
    LossOptions options;
    options.supervision = FineSupervision::Truth;
    auto frozen = std::make_shared<std::vector<real>>();
    {
      NoTapeScope none;
      *frozen = compute_losses(m, c, batch, options).variance;
    }
    options.frozen_variance = frozen.get();
    return Case{[=] {
                  (void)frozen;
                  return compute_losses(m, c, batch, options).total;
                },
                parameter_list(m)};
  });
  return s.entries();
}

}  // namespace loftr::LOFTR_PRECISION
