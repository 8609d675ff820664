#include "loftr/model.hpp"

#include <cmath>
#include <random>

namespace loftr::LOFTR_PRECISION {

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(3.0 / double(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<real> values(shape_numel(shape));
    for (real& v : values) v = static_cast<real>(dist(rng_));
    return Tensor::parameter(std::move(shape), std::move(values));
  }

  static Tensor constant(Shape shape, real value) {
    std::vector<real> values(shape_numel(shape), value);
    return Tensor::parameter(std::move(shape), std::move(values));
  }

 private:
  std::mt19937_64 rng_;
};

EncoderLayerParams make_layer(Initializer& init, std::size_t d, AttentionKind kind) {
  EncoderLayerParams p;
  if (kind == AttentionKind::Conv) {
    p.conv_weight = init.uniform({9, d}, 9);
  } else {
    p.w_query = init.uniform({d, d}, d);
    p.w_key = init.uniform({d, d}, d);
    p.w_value = init.uniform({d, d}, d);
    p.w_merge = init.uniform({d, d}, d);
  }
  p.norm1_gain = Initializer::constant({d}, 1);
  p.norm1_bias = Initializer::constant({d}, 0);
  p.norm2_gain = Initializer::constant({2 * d}, 1);
  p.norm2_bias = Initializer::constant({2 * d}, 0);
  p.ffn_in = init.uniform({2 * d, 2 * d}, 2 * d);
  p.ffn_out = Initializer::constant({2 * d, d}, 0);
  return p;
}

StackParams make_stack(Initializer& init, std::size_t d, std::size_t rounds, AttentionKind kind) {
  StackParams s;
  for (std::size_t i = 0; i < 2 * rounds; ++i) s.layers.push_back(make_layer(init, d, kind));
  return s;
}

void visit_layer(const std::string& prefix, const EncoderLayerParams& p,
                 const std::function<void(const std::string&, const Tensor&)>& fn) {
  const std::pair<const char*, const Tensor*> fields[] = {
      {"w_query", &p.w_query},       {"w_key", &p.w_key},         {"w_value", &p.w_value},
      {"w_merge", &p.w_merge},       {"conv_weight", &p.conv_weight}, {"norm1_gain", &p.norm1_gain},
      {"norm1_bias", &p.norm1_bias}, {"ffn_in", &p.ffn_in},       {"ffn_out", &p.ffn_out},
      {"norm2_gain", &p.norm2_gain}, {"norm2_bias", &p.norm2_bias}};
  for (const auto& [name, tensor] : fields)
    if (tensor->defined()) fn(prefix + name, *tensor);
}

}  // namespace

ModelParams init_model(const Config& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  ModelParams m;
  const std::size_t dc = config.d_coarse, df = config.d_fine;
  m.backbone.coarse_weight = init.uniform({64, dc}, 64);
  m.backbone.coarse_bias = Initializer::constant({dc}, 0);
  m.backbone.fine_weight = init.uniform({4, df}, 4);
  m.backbone.fine_bias = Initializer::constant({df}, 0);
  m.coarse_stack = make_stack(init, dc, config.n_coarse, config.coarse_attention);
  m.fine.merge_weight = init.uniform({df + dc, df}, df + dc);
  m.fine.merge_bias = Initializer::constant({df}, 0);
  m.fine.stack = make_stack(init, df, config.n_fine, config.fine_attention);
  if (config.matcher == MatcherKind::OptimalTransport) m.dustbin = Initializer::constant({1}, 1);
  return m;
}

void visit_parameters(const ModelParams& params, const std::function<void(const std::string&, const Tensor&)>& fn) {
  fn("backbone.coarse_weight", params.backbone.coarse_weight);
  fn("backbone.coarse_bias", params.backbone.coarse_bias);
  fn("backbone.fine_weight", params.backbone.fine_weight);
  fn("backbone.fine_bias", params.backbone.fine_bias);
  for (std::size_t i = 0; i < params.coarse_stack.layers.size(); ++i)
    visit_layer("coarse.layer" + std::to_string(i) + ".", params.coarse_stack.layers[i], fn);
  fn("fine.merge_weight", params.fine.merge_weight);
  fn("fine.merge_bias", params.fine.merge_bias);
  for (std::size_t i = 0; i < params.fine.stack.layers.size(); ++i)
    visit_layer("fine.layer" + std::to_string(i) + ".", params.fine.stack.layers[i], fn);
  if (params.dustbin.defined()) fn("matcher.dustbin", params.dustbin);
}

std::vector<Tensor> parameter_list(const ModelParams& params) {
  std::vector<Tensor> out;
  visit_parameters(params, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_parameters(params, [&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

AttentionOptions coarse_attention_options(const Config& config, std::size_t grid_height, std::size_t grid_width) {
  AttentionOptions o;
  o.kind = config.coarse_attention;
  o.heads = config.heads;
  o.grid_height = grid_height;
  o.grid_width = grid_width;
  return o;
}

AttentionOptions fine_attention_options(const Config& config) {
  AttentionOptions o;
  o.kind = config.fine_attention;
  o.heads = config.heads;
  o.grid_height = o.grid_width = config.window;
  return o;
}

CoarseStage forward_coarse(const ModelParams& params, const Config& config, const std::vector<const Image*>& images_a,
                           const std::vector<const Image*>& images_b) {
  if (images_a.size() != images_b.size() || images_a.empty())
    throw DimensionError("forward_coarse: need the same positive number of A and B images");
  std::vector<Image> standardized;
  standardized.reserve(2 * images_a.size());
  for (const auto* group : {&images_a, &images_b})
    for (const Image* image : *group) standardized.push_back(standardize_image(*image));
  std::vector<const Image*> all;
  for (const Image& image : standardized) all.push_back(&image);
  const FeatureMaps maps = extract_batch(all, params.backbone);
  const std::size_t p = images_a.size();
  const Tensor encoding = positional_encoding(maps.coarse_height, maps.coarse_width, config.d_coarse);

  Tensor coarse_a = slice(maps.coarse, 0, 0, p), coarse_b = slice(maps.coarse, 0, p, p);
  AttentionOptions options = coarse_attention_options(config, maps.coarse_height, maps.coarse_width);
  if (config.pe_per_layer) {
    options.per_round_encoding = &encoding;
  } else {
    coarse_a = add_positional(coarse_a, encoding);
    coarse_b = add_positional(coarse_b, encoding);
  }
  auto [tr_a, tr_b] = loftr_stack(coarse_a, coarse_b, params.coarse_stack, options);

  CoarseStage stage;
  stage.features.fine_a = slice(maps.fine, 0, 0, p);
  stage.features.fine_b = slice(maps.fine, 0, p, p);
  stage.features.coarse_a = tr_a;
  stage.features.coarse_b = tr_b;
  stage.features.coarse_height = maps.coarse_height;
  stage.features.coarse_width = maps.coarse_width;
  stage.features.fine_height = maps.fine_height;
  stage.features.fine_width = maps.fine_width;

  if (config.matcher == MatcherKind::DualSoftmax) {
    const Tensor fa = config.normalize_features ? l2_normalize(tr_a) : tr_a;
    const Tensor fb = config.normalize_features ? l2_normalize(tr_b) : tr_b;
    stage.confidence = dual_softmax(score_matrix(fa, fb, config.temperature));
  } else {
    if (!params.dustbin.defined()) throw ConfigError("matcher: optimal transport requires a dustbin parameter");
    stage.confidence = sinkhorn_ot(score_matrix(tr_a, tr_b, config.temperature), config.sinkhorn_iters, params.dustbin);
  }
  return stage;
}

MatchResult match_pair(const ModelParams& params, const Config& config, const Image& image_a, const Image& image_b) {
  NoTapeScope no_tape;
  validate_image(image_a);
  validate_image(image_b);
  if (image_a.height != image_b.height || image_a.width != image_b.width)
    throw DimensionError("match: both images must have the same extents");
  const CoarseStage stage = forward_coarse(params, config, {&image_a}, {&image_b});
  MatchResult result;
  result.coarse_height = stage.features.coarse_height;
  result.coarse_width = stage.features.coarse_width;
  const std::size_t n = result.coarse_height * result.coarse_width;
  result.confidence = reshape(stage.confidence.prob, {n, n});
  result.coarse = select_matches(result.confidence, config.theta_c);
  result.fine = refine_all(result.coarse, stage.features, params.fine, fine_attention_options(config), config.window);
  return result;
}

}  // namespace loftr::LOFTR_PRECISION
