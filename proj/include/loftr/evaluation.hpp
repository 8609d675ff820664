#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "loftr/model.hpp"

namespace loftr::LOFTR_PRECISION {

/// Seed of pair `index` in a held-out suite.
std::uint64_t matching_pair_seed(std::uint64_t seed, std::size_t index);
std::uint64_t homography_pair_seed(std::uint64_t seed, std::size_t index);

struct MatchingEvaluation {
  std::size_t pairs = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
  std::size_t true_positives = 0;
  std::size_t fine_matches = 0;
  double precision = 0;
  double recall = 0;
  /// Mean ‖point_B − warp(point_A)‖ in image pixels over refined matches.
  double fine_epe = 0;
  /// Same matches with point_B at the center of the matched B cell.
  double coarse_epe = 0;
};

/// Coarse precision/recall against the ground-truth matches and endpoint
/// errors over `pairs` seeded synthetic pairs.
MatchingEvaluation evaluate_matching(const ModelParams& params, const Config& config, std::size_t pairs,
                                     std::uint64_t seed);

struct PairEvaluation {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t coarse_matches = 0;
  std::size_t fine_matches = 0;
  std::size_t inliers = 0;
  bool success = false;
  double corner_error = 0;  // +inf when estimation failed
};

struct HomographyEvaluation {
  std::vector<PairEvaluation> pairs;
  std::size_t failures = 0;
  double auc3 = 0;
  double auc5 = 0;
  double auc10 = 0;
};

/// match → RANSAC → corner error per pair, then AUC at 3, 5 and 10 px.
HomographyEvaluation evaluate_homography(const ModelParams& params, const Config& config, std::size_t pairs,
                                         std::uint64_t seed);

void write_evaluation_csv(std::ostream& out, const HomographyEvaluation& evaluation);
void write_evaluation_table(std::ostream& out, const HomographyEvaluation& evaluation);

}  // namespace loftr::LOFTR_PRECISION
