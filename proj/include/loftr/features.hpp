#pragma once

#include <vector>

#include "loftr/image.hpp"
#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

/// Linear patch embeddings: 8×8 patches to the coarse grid, 2×2 patches to
/// the fine grid. Weights are [patch², d], biases [d].
struct BackboneParams {
  Tensor coarse_weight;
  Tensor coarse_bias;
  Tensor fine_weight;
  Tensor fine_bias;
};

/// Row-major grids flattened to [cells, channels], or [images, cells,
/// channels] for a batch.
struct FeatureMaps {
  Tensor coarse;
  Tensor fine;
  std::size_t coarse_height = 0;
  std::size_t coarse_width = 0;
  std::size_t fine_height = 0;
  std::size_t fine_width = 0;
};

/// Throws DimensionError unless both extents are positive multiples of 8 and
/// InputError if a value leaves [0,1].
void validate_image(const Image& image);

/// Zero-mean, unit-variance copy of the intensities (a constant image maps to
/// zeros). Applied by the model before the backbone.
Image standardize_image(const Image& image);

/// [cells, patch²] matrix of non-overlapping patches, cells in row-major order.
Tensor patch_matrix(const Image& image, std::size_t patch);

/// Throws DimensionError unless extents are positive multiples of 8.
FeatureMaps extract(const Image& image, const BackboneParams& params);
/// All images must share extents; maps gain a leading image axis.
FeatureMaps extract_batch(const std::vector<const Image*>& images, const BackboneParams& params);

/// [h·w, d] sinusoids: the first d/2 channels encode the row, the rest the
/// column, each as (sin, cos) pairs at frequencies 10000^(-4k/d).
Tensor positional_encoding(std::size_t height, std::size_t width, std::size_t channels);

/// coarse + encoding, broadcast over a leading image axis if present.
Tensor add_positional(const Tensor& coarse, const Tensor& encoding);

}  // namespace loftr::LOFTR_PRECISION
