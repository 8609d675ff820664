#include "loftr/attention.hpp"

#include <string>

namespace loftr::LOFTR_PRECISION {

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, const char* op) {
  const std::size_t nd = q.ndim();
  if (nd < 2 || nd > 3 || k.ndim() != nd || v.ndim() != nd)
    throw DimensionError(std::string(op) + ": expected matching rank-2 or rank-3 inputs");
  if (k.dim(nd - 2) != v.dim(nd - 2) || q.dim(nd - 1) != k.dim(nd - 1))
    throw DimensionError(std::string(op) + ": extents disagree: Q " + shape_to_string(q.shape()) + ", K " +
                         shape_to_string(k.shape()) + ", V " + shape_to_string(v.shape()));
  if (nd == 3 && (k.dim(0) != q.dim(0) || v.dim(0) != q.dim(0)))
    throw DimensionError(std::string(op) + ": batch extents disagree");
}

Tensor as_batch(const Tensor& x) { return x.ndim() == 2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x; }

Tensor depthwise_conv(const Tensor& source, const Tensor& weight, std::size_t gh, std::size_t gw) {
  const std::size_t batch = source.dim(0), length = source.dim(1), d = source.dim(2);
  if (gh * gw != length)
    throw ConfigError("convolution layer: token grid " + std::to_string(gh) + "x" + std::to_string(gw) +
                      " does not match sequence length " + std::to_string(length));
  const Tensor flat = reshape(source, {batch * length, d});
  Tensor out;
  std::size_t k = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx, ++k) {
      std::vector<std::ptrdiff_t> rows(batch * length);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t r = 0; r < gh; ++r)
          for (std::size_t c = 0; c < gw; ++c) {
            const std::ptrdiff_t rr = std::ptrdiff_t(r) + dy, cc = std::ptrdiff_t(c) + dx;
            const bool inside = rr >= 0 && cc >= 0 && rr < std::ptrdiff_t(gh) && cc < std::ptrdiff_t(gw);
            rows[b * length + r * gw + c] = inside ? std::ptrdiff_t(b * length) + rr * std::ptrdiff_t(gw) + cc : -1;
          }
      const Tensor term = mul(gather_rows(flat, rows), slice(weight, 0, k, 1));
      out = out.defined() ? add(out, term) : term;
    }
  return reshape(out, {batch, length, d});
}

}  // namespace

Tensor vanilla_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, v, "vanilla_attention");
  const std::size_t axis = q.ndim() - 1;
  return matmul(softmax(matmul_nt(q, k), axis), v);
}

Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, v, "linear_attention");
  const Tensor fq = elu_plus_one(q);
  const Tensor fk = elu_plus_one(k);
  const Tensor kv = matmul_tn(fk, v);  // [d_h, d_h] summary of all keys
  const Tensor numerator = matmul(fq, kv);
  const Tensor key_sum = sum(fk, fk.ndim() - 2);
  const Tensor normalizer = matmul_nt(fq, key_sum);
  return div(numerator, normalizer);
}

Tensor encoder_layer(const Tensor& x, const Tensor& source, const EncoderLayerParams& params, LayerKind kind,
                     const AttentionOptions& options) {
  if (kind == LayerKind::Self && x.impl() != source.impl())
    throw ContractError("encoder_layer: a self layer must attend to its own input");
  if (x.ndim() != source.ndim() || x.ndim() < 2 || x.ndim() > 3)
    throw DimensionError("encoder_layer: expected [N, d] or [B, N, d] inputs");
  const bool unbatched = x.ndim() == 2;
  const Tensor xb = as_batch(x);
  const Tensor sb = kind == LayerKind::Self ? xb : as_batch(source);
  const std::size_t d = xb.dim(2);
  if (sb.dim(2) != d || sb.dim(0) != xb.dim(0)) throw DimensionError("encoder_layer: source extents disagree");

  Tensor message;
  if (options.kind == AttentionKind::Conv) {
    message = depthwise_conv(xb, params.conv_weight, options.grid_height, options.grid_width);
  } else {
    const std::size_t h = options.heads;
    if (h == 0 || d % h != 0)
      throw ConfigError("encoder_layer: head count " + std::to_string(h) + " does not divide " + std::to_string(d));
    const Tensor q = split_heads(matmul(xb, params.w_query), h);
    const Tensor k = split_heads(matmul(sb, params.w_key), h);
    const Tensor v = split_heads(matmul(sb, params.w_value), h);
    const Tensor attended =
        options.kind == AttentionKind::Linear ? linear_attention(q, k, v) : vanilla_attention(q, k, v);
    message = matmul(merge_heads(attended, h), params.w_merge);
  }
  message = layer_norm(message, params.norm1_gain, params.norm1_bias);
  Tensor hidden = layer_norm(concat({xb, message}, 2), params.norm2_gain, params.norm2_bias);
  hidden = elu(matmul(hidden, params.ffn_in));
  const Tensor out = add(xb, matmul(hidden, params.ffn_out));
  return unbatched ? reshape(out, {x.dim(0), d}) : out;
}

std::pair<Tensor, Tensor> loftr_stack(const Tensor& features_a, const Tensor& features_b, const StackParams& params,
                                      const AttentionOptions& options) {
  if (params.layers.size() % 2 != 0) throw ConfigError("loftr_stack: layer count must be even");
  if (features_a.ndim() != features_b.ndim()) throw DimensionError("loftr_stack: rank mismatch");
  if (params.layers.empty() && options.per_round_encoding == nullptr) return {features_a, features_b};
  const bool unbatched = features_a.ndim() == 2;
  Tensor a = as_batch(features_a), b = as_batch(features_b);
  const std::size_t na = a.dim(0);
  if (b.dim(0) != na) throw DimensionError("loftr_stack: batch extents disagree");
  // A and B run through each layer together as one batch.
  const bool same_length = a.dim(1) == b.dim(1);
  for (std::size_t r = 0; r < params.rounds(); ++r) {
    const EncoderLayerParams& self_layer = params.layers[2 * r];
    const EncoderLayerParams& cross_layer = params.layers[2 * r + 1];
    if (options.per_round_encoding) {
      a = add(a, *options.per_round_encoding);
      b = add(b, *options.per_round_encoding);
    }
    if (same_length) {
      Tensor both = concat({a, b}, 0);
      both = encoder_layer(both, both, self_layer, LayerKind::Self, options);
      const Tensor swapped = concat({slice(both, 0, na, na), slice(both, 0, 0, na)}, 0);
      both = encoder_layer(both, swapped, cross_layer, LayerKind::Cross, options);
      a = slice(both, 0, 0, na);
      b = slice(both, 0, na, na);
    } else {
      a = encoder_layer(a, a, self_layer, LayerKind::Self, options);
      b = encoder_layer(b, b, self_layer, LayerKind::Self, options);
      const Tensor next_a = encoder_layer(a, b, cross_layer, LayerKind::Cross, options);
      const Tensor next_b = encoder_layer(b, a, cross_layer, LayerKind::Cross, options);
      a = next_a;
      b = next_b;
    }
  }
  if (unbatched) {
    a = reshape(a, {a.dim(1), a.dim(2)});
    b = reshape(b, {b.dim(1), b.dim(2)});
  }
  return {a, b};
}

}  // namespace loftr::LOFTR_PRECISION
