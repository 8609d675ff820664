#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "loftr/attention.hpp"
#include "loftr/coarse_matching.hpp"
#include "loftr/config.hpp"
#include "loftr/features.hpp"
#include "loftr/fine_refinement.hpp"
#include "loftr/image.hpp"

namespace loftr::LOFTR_PRECISION {

struct ModelParams {
  BackboneParams backbone;
  StackParams coarse_stack;
  FineParams fine;
  Tensor dustbin;  // optimal-transport mode only, shape [1]
};

/// Uniform fan-in initialization (bound √(3/fan_in)); zero biases, unit
/// normalization gains and a zero final feed-forward layer so every encoder
/// layer starts as the identity.
ModelParams init_model(const Config& config, std::uint64_t seed);

/// Every parameter in a fixed order with a stable dotted name.
void visit_parameters(const ModelParams& params, const std::function<void(const std::string&, const Tensor&)>& fn);
std::vector<Tensor> parameter_list(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);

AttentionOptions coarse_attention_options(const Config& config, std::size_t grid_height, std::size_t grid_width);
AttentionOptions fine_attention_options(const Config& config);

struct CoarseStage {
  FineInputs features;  // transformed coarse maps plus native fine maps
  ConfidenceMatrix confidence;  // [P, N_A, N_B]
};

/// Backbone, positional encoding, coarse stack and matching layer for P pairs
/// of equally sized images.
CoarseStage forward_coarse(const ModelParams& params, const Config& config, const std::vector<const Image*>& images_a,
                           const std::vector<const Image*>& images_b);

struct MatchResult {
  std::vector<CoarseMatch> coarse;
  FineMatchSet fine;
  Tensor confidence;  // [N_A, N_B]
  std::size_t coarse_height = 0;
  std::size_t coarse_width = 0;
};

/// Full inference on one pair, without recording gradients.
MatchResult match_pair(const ModelParams& params, const Config& config, const Image& image_a, const Image& image_b);

}  // namespace loftr::LOFTR_PRECISION
