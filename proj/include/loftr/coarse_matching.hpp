#pragma once

#include <span>
#include <vector>

#include "loftr/config.hpp"
#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

/// Matching probabilities over coarse cell pairs. Tensors are [N_A, N_B], or
/// [P, N_A, N_B] for P pairs at once.
struct ConfidenceMatrix {
  MatcherKind mode = MatcherKind::DualSoftmax;
  Tensor prob;
  Tensor log_prob;
  /// Optimal-transport mode only: log of the [N_A+1, N_B+1] assignment
  /// including the dustbin row and column.
  Tensor log_assignment;
};

/// (1/τ)·⟨a_i, b_j⟩ over the last axis; throws ConfigError unless τ > 0.
Tensor score_matrix(const Tensor& features_a, const Tensor& features_b, double temperature);

/// Product of the row-wise and column-wise softmax, evaluated in log space.
ConfidenceMatrix dual_softmax(const Tensor& scores);

/// Log-domain Sinkhorn on the scores augmented with a dustbin row and column
/// holding `dustbin_score` (shape [1]). Real rows and columns carry mass 1, the
/// dustbins N_B and N_A respectively.
ConfidenceMatrix sinkhorn_ot(const Tensor& scores, std::size_t iterations, const Tensor& dustbin_score);

struct CoarseMatch {
  std::size_t a = 0;  // cell index in A
  std::size_t b = 0;  // cell index in B
  double confidence = 0;
};

/// Pairs with confidence ≥ θ that are mutual row/column maxima (lowest index
/// wins ties). `prob` is a row-major [rows, cols] block.
std::vector<CoarseMatch> select_matches(std::span<const real> prob, std::size_t rows, std::size_t cols,
                                        double threshold);
std::vector<CoarseMatch> select_matches(const Tensor& prob, double threshold);

}  // namespace loftr::LOFTR_PRECISION
