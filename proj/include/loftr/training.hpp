#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loftr/model.hpp"
#include "loftr/synthetic.hpp"

namespace loftr::LOFTR_PRECISION {

struct CellPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool operator==(const CellPair&) const = default;
};

/// Mutual nearest neighbours between A's cell centers warped into B and B's
/// cell centers, kept when closer than one cell (8 px). Cells whose centers
/// warp outside B are excluded. Sorted by A index.
std::vector<CellPair> gt_coarse_matches(const WarpModel& geometry, std::size_t height, std::size_t width);

/// Ground-truth position in B (fine cells) of the token at the center of A's
/// window (the rounded cell center), or nullopt when it leaves the image or
/// the w×w window around B's rounded cell center.
std::optional<Point2> gt_fine_target(const CellPair& cells, const WarpModel& geometry, std::size_t height,
                                     std::size_t width, std::size_t window);

struct LossTerm {
  Tensor value;  // undefined when no term contributed
  std::size_t count = 0;
  std::vector<std::string> skipped;
};

/// Mean −log P over ground-truth pairs. In optimal-transport mode unmatched
/// rows and columns are supervised towards the dustbins. Pairs without any
/// ground truth are skipped.
LossTerm coarse_loss(const ConfidenceMatrix& confidence, const std::vector<std::vector<CellPair>>& truth);

/// Mean of ‖expectation − target‖² / max(σ², 1e-4) over rows with a target,
/// with σ² treated as a constant. `frozen_variance` replaces σ² when given.
LossTerm fine_loss(const Tensor& expectation, const Tensor& variance,
                   const std::vector<std::optional<Point2>>& target_offsets,
                   const std::vector<real>* frozen_variance = nullptr);

struct LossOptions {
  FineSupervision supervision = FineSupervision::PredictedAndTruth;
  bool teacher_forcing = true;
  const std::vector<real>* frozen_variance = nullptr;
};

struct BatchResult {
  Tensor total;
  double coarse_loss = 0;
  double fine_loss = 0;
  std::size_t truth_pairs = 0;
  std::size_t predicted = 0;
  std::size_t true_positives = 0;
  std::size_t fine_supervised = 0;
  double fine_epe_sum = 0;  // image pixels, over supervised rows
  std::vector<real> variance;  // per refined row
  std::vector<std::string> notes;
};

/// L = L_c + L_f on a batch of pairs. Records on the active tape, if any.
BatchResult compute_losses(const ModelParams& params, const Config& config, const std::vector<SyntheticPair>& pairs,
                           const LossOptions& options);

/// Adam without weight decay.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct StepMetrics {
  std::size_t step = 0;
  double coarse_loss = 0;
  double fine_loss = 0;
  double coarse_precision = 0;
  double coarse_recall = 0;
  double fine_epe = 0;
};

/// Thrown when a loss becomes non-finite; the message names the dump file.
class DivergenceError : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

/// Seed of the i-th training pair.
std::uint64_t training_pair_seed(const Config& config, std::size_t index);
std::vector<SyntheticPair> training_batch(const Config& config, std::size_t step);

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  /// Where a diagnostic dump is written on divergence.
  std::filesystem::path divergence_dump = "divergence_dump.txt";
};

/// Optimizes `params` in place for config.steps steps and returns the trace.
std::vector<StepMetrics> train(ModelParams& params, const Config& config, const TrainHooks& hooks = {});

/// CSV with header step,L_c,L_f,coarse_precision,coarse_recall,fine_epe.
void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& trace);
std::string format_metric(double value);

}  // namespace loftr::LOFTR_PRECISION
