#pragma once

#include <utility>
#include <vector>

#include "loftr/config.hpp"
#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

/// One encoder layer. Attention layers use the four projections; the
/// convolution variant uses `conv_weight` ([9, d], depthwise 3×3) instead.
struct EncoderLayerParams {
  Tensor w_query;  // [d, d]
  Tensor w_key;
  Tensor w_value;
  Tensor w_merge;
  Tensor conv_weight;
  Tensor norm1_gain;  // [d]
  Tensor norm1_bias;
  Tensor ffn_in;  // [2d, 2d]
  Tensor ffn_out;  // [2d, d]
  Tensor norm2_gain;  // [2d]
  Tensor norm2_bias;
};

/// Layers in [self, cross] order, repeated once per round.
struct StackParams {
  std::vector<EncoderLayerParams> layers;
  std::size_t rounds() const { return layers.size() / 2; }
};

enum class LayerKind { Self, Cross };

struct AttentionOptions {
  AttentionKind kind = AttentionKind::Linear;
  std::size_t heads = 4;
  /// Token grid, needed by the convolution variant.
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  /// When set, added to both inputs before every round.
  const Tensor* per_round_encoding = nullptr;
};

/// softmax(Q·Kᵀ)·V over the last two axes; inputs [N, d_h] or [B, N, d_h].
Tensor vanilla_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// φ(Q)·(φ(K)ᵀ·V) normalized by φ(Q)·Σφ(K), φ = elu + 1.
Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Residual update x + FFN(LN(concat(x, LN(message)))) where the message is
/// multi-head attention from x to `source`. Inputs [N, d] or [B, N, d].
Tensor encoder_layer(const Tensor& x, const Tensor& source, const EncoderLayerParams& params, LayerKind kind,
                     const AttentionOptions& options);

/// Interleaved self/cross stack with weights shared by both images. Cross
/// updates of A and B both read the features from before that layer.
std::pair<Tensor, Tensor> loftr_stack(const Tensor& features_a, const Tensor& features_b, const StackParams& params,
                                      const AttentionOptions& options);

}  // namespace loftr::LOFTR_PRECISION
