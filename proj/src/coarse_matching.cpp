#include "loftr/coarse_matching.hpp"

#include <cmath>
#include <string>

namespace loftr::LOFTR_PRECISION {

Tensor score_matrix(const Tensor& features_a, const Tensor& features_b, double temperature) {
  if (!(temperature > 0)) throw ConfigError("score_matrix: temperature must be positive, got " + std::to_string(temperature));
  return scale(matmul_nt(features_a, features_b), static_cast<real>(1.0 / temperature));
}

ConfidenceMatrix dual_softmax(const Tensor& scores) {
  if (scores.ndim() < 2 || scores.ndim() > 3) throw DimensionError("dual_softmax: expected a rank-2 or rank-3 score matrix");
  const std::size_t cols = scores.ndim() - 1, rows = scores.ndim() - 2;
  ConfidenceMatrix out;
  out.mode = MatcherKind::DualSoftmax;
  out.log_prob = add(log_softmax(scores, cols), log_softmax(scores, rows));
  out.prob = exp(out.log_prob);
  return out;
}

ConfidenceMatrix sinkhorn_ot(const Tensor& scores, std::size_t iterations, const Tensor& dustbin_score) {
  if (iterations < 1) throw ConfigError("sinkhorn_ot: at least one iteration is required");
  if (scores.ndim() < 2 || scores.ndim() > 3) throw DimensionError("sinkhorn_ot: expected a rank-2 or rank-3 score matrix");
  if (dustbin_score.numel() != 1) throw DimensionError("sinkhorn_ot: dustbin score must hold one value");
  const bool unbatched = scores.ndim() == 2;
  const Tensor s = unbatched ? reshape(scores, {1, scores.dim(0), scores.dim(1)}) : scores;
  const std::size_t p = s.dim(0), na = s.dim(1), nb = s.dim(2);
  const Tensor alpha = reshape(dustbin_score, {1});

  const Tensor right = add(Tensor::zeros({p, na, 1}), alpha);
  const Tensor bottom = add(Tensor::zeros({p, 1, nb + 1}), alpha);
  const Tensor z = concat({concat({s, right}, 2), bottom}, 1);

  std::vector<real> mu(p * (na + 1), real{0}), nu(p * (nb + 1), real{0});
  for (std::size_t b = 0; b < p; ++b) {
    mu[b * (na + 1) + na] = static_cast<real>(std::log(double(nb)));
    nu[b * (nb + 1) + nb] = static_cast<real>(std::log(double(na)));
  }
  const Tensor log_mu = Tensor::from_data({p, na + 1, 1}, std::move(mu));
  const Tensor log_nu = Tensor::from_data({p, 1, nb + 1}, std::move(nu));

  Tensor v = Tensor::zeros({p, 1, nb + 1});
  Tensor u;
  for (std::size_t it = 0; it < iterations; ++it) {
    u = sub(log_mu, logsumexp(add(z, v), 2));
    v = sub(log_nu, logsumexp(add(z, u), 1));
  }
  Tensor log_assignment = add(add(z, u), v);
  Tensor log_prob = slice(slice(log_assignment, 1, 0, na), 2, 0, nb);
  ConfidenceMatrix out;
  out.mode = MatcherKind::OptimalTransport;
  if (unbatched) {
    log_assignment = reshape(log_assignment, {na + 1, nb + 1});
    log_prob = reshape(log_prob, {na, nb});
  }
  out.log_assignment = log_assignment;
  out.log_prob = log_prob;
  out.prob = exp(log_prob);
  return out;
}

std::vector<CoarseMatch> select_matches(std::span<const real> prob, std::size_t rows, std::size_t cols,
                                        double threshold) {
  if (prob.size() != rows * cols) throw DimensionError("select_matches: size does not match extents");
  std::vector<std::size_t> row_best(rows, 0), col_best(cols, 0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 1; j < cols; ++j)
      if (prob[i * cols + j] > prob[i * cols + row_best[i]]) row_best[i] = j;
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 1; i < rows; ++i)
      if (prob[i * cols + j] > prob[col_best[j] * cols + j]) col_best[j] = i;
  std::vector<CoarseMatch> out;
  for (std::size_t i = 0; i < rows && cols > 0; ++i) {
    const std::size_t j = row_best[i];
    const double c = prob[i * cols + j];
    if (c >= threshold && col_best[j] == i) out.push_back({i, j, c});
  }
  return out;
}

std::vector<CoarseMatch> select_matches(const Tensor& prob, double threshold) {
  if (prob.ndim() != 2) throw DimensionError("select_matches: expected a rank-2 confidence matrix");
  return select_matches(prob.values(), prob.dim(0), prob.dim(1), threshold);
}

}  // namespace loftr::LOFTR_PRECISION
