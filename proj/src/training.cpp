#include "loftr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

namespace loftr::LOFTR_PRECISION {

namespace {

Point2 cell_center(std::size_t cell, std::size_t coarse_width) {
  return {8.0 * double(cell % coarse_width) + 3.5, 8.0 * double(cell / coarse_width) + 3.5};
}

bool in_frame(Point2 p, std::size_t height, std::size_t width) {
  return p.x >= -0.5 && p.y >= -0.5 && p.x <= double(width) - 0.5 && p.y <= double(height) - 0.5;
}

// Per source cell: index of the nearest target cell center after warping, or
// npos when the center leaves the frame.
std::vector<std::size_t> nearest_cells(const WarpModel& geometry, std::size_t height, std::size_t width,
                                       std::vector<double>& distance) {
  const std::size_t ch = height / 8, cw = width / 8, n = ch * cw;
  std::vector<std::size_t> nearest(n, std::numeric_limits<std::size_t>::max());
  distance.assign(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    Point2 q;
    try {
      q = warp(geometry, cell_center(i, cw));
    } catch (const GeometryError&) {
      continue;
    }
    if (!in_frame(q, height, width)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const Point2 c = cell_center(j, cw);
      const double d = std::hypot(q.x - c.x, q.y - c.y);
      if (d < distance[i]) {
        distance[i] = d;
        nearest[i] = j;
      }
    }
  }
  return nearest;
}

double squared(double v) { return v * v; }

}  // namespace

std::vector<CellPair> gt_coarse_matches(const WarpModel& geometry, std::size_t height, std::size_t width) {
  if (height % 8 != 0 || width % 8 != 0) throw DimensionError("gt_coarse_matches: extents must be multiples of 8");
  (void)as_homography(geometry);  // rejects degenerate warps
  std::vector<double> dist_ab, dist_ba;
  const std::vector<std::size_t> ab = nearest_cells(geometry, height, width, dist_ab);
  const std::vector<std::size_t> ba = nearest_cells(inverse(geometry), height, width, dist_ba);
  std::vector<CellPair> out;
  for (std::size_t i = 0; i < ab.size(); ++i) {
    const std::size_t j = ab[i];
    if (j >= ba.size() || ba[j] != i) continue;
    if (dist_ab[i] <= 8.0 && dist_ba[j] <= 8.0) out.push_back({i, j});
  }
  return out;
}

std::optional<Point2> gt_fine_target(const CellPair& cells, const WarpModel& geometry, std::size_t height,
                                     std::size_t width, std::size_t window) {
  const std::size_t ch = height / 8, cw = width / 8;
  const Point2 fine_a = locate_fine_center(cells.a, ch, cw);
  const Point2 a = fine_to_image({std::floor(fine_a.x + 0.5), std::floor(fine_a.y + 0.5)});
  Point2 q;
  try {
    q = warp(geometry, a);
  } catch (const GeometryError&) {
    return std::nullopt;
  }
  if (!(q.x >= 0 && q.y >= 0 && q.x <= double(width) - 1 && q.y <= double(height) - 1)) return std::nullopt;
  const Point2 target = image_to_fine(q);
  const Point2 center = locate_fine_center(cells.b, ch, cw);
  const double r = double(window / 2);
  if (std::abs(target.x - std::floor(center.x + 0.5)) > r || std::abs(target.y - std::floor(center.y + 0.5)) > r)
    return std::nullopt;
  return target;
}

LossTerm coarse_loss(const ConfidenceMatrix& confidence, const std::vector<std::vector<CellPair>>& truth) {
  const bool ot = confidence.mode == MatcherKind::OptimalTransport;
  Tensor table = ot ? confidence.log_assignment : confidence.log_prob;
  if (table.ndim() == 2) table = reshape(table, {1, table.dim(0), table.dim(1)});
  const std::size_t pairs = table.dim(0), rows = table.dim(1), cols = table.dim(2);
  if (truth.size() != pairs) throw DimensionError("coarse_loss: one ground-truth set per pair is required");
  const std::size_t na = ot ? rows - 1 : rows, nb = ot ? cols - 1 : cols;
  LossTerm term;
  std::vector<std::ptrdiff_t> picks;
  for (std::size_t p = 0; p < pairs; ++p) {
    if (truth[p].empty()) {
      term.skipped.push_back("pair " + std::to_string(p) + ": no ground-truth coarse matches");
      continue;
    }
    const std::size_t base = p * rows * cols;
    std::vector<bool> row_used(na, false), col_used(nb, false);
    for (const CellPair& c : truth[p]) {
      if (c.a >= na || c.b >= nb) throw IndexError("coarse_loss: ground-truth cell outside the confidence matrix");
      picks.push_back(std::ptrdiff_t(base + c.a * cols + c.b));
      row_used[c.a] = col_used[c.b] = true;
    }
    if (ot) {
      for (std::size_t i = 0; i < na; ++i)
        if (!row_used[i]) picks.push_back(std::ptrdiff_t(base + i * cols + nb));
      for (std::size_t j = 0; j < nb; ++j)
        if (!col_used[j]) picks.push_back(std::ptrdiff_t(base + na * cols + j));
    }
  }
  term.count = picks.size();
  if (picks.empty()) return term;
  const Tensor chosen = gather_rows(reshape(table, {pairs * rows * cols, 1}), picks);
  term.value = scale(mean(chosen), real{-1});
  return term;
}

LossTerm fine_loss(const Tensor& expectation, const Tensor& variance,
                   const std::vector<std::optional<Point2>>& target_offsets, const std::vector<real>* frozen_variance) {
  LossTerm term;
  if (!expectation.defined() || target_offsets.empty()) {
    term.skipped.push_back("no refined matches");
    return term;
  }
  const std::size_t m = expectation.dim(0);
  if (target_offsets.size() != m || variance.numel() != m)
    throw DimensionError("fine_loss: one target and one variance per refined match are required");
  if (frozen_variance && frozen_variance->size() != m) throw DimensionError("fine_loss: frozen variance size mismatch");
  const auto var = variance.values();
  std::vector<std::ptrdiff_t> rows;
  std::vector<real> targets, weights;
  for (std::size_t i = 0; i < m; ++i) {
    if (!target_offsets[i]) continue;
    rows.push_back(std::ptrdiff_t(i));
    targets.push_back(static_cast<real>(target_offsets[i]->x));
    targets.push_back(static_cast<real>(target_offsets[i]->y));
    const real s2 = frozen_variance ? (*frozen_variance)[i] : var[i];
    weights.push_back(real{1} / std::max(s2, real(1e-4)));
  }
  term.count = rows.size();
  if (rows.empty()) {
    term.skipped.push_back("no refined match has a target inside its window");
    return term;
  }
  const std::size_t k = rows.size();
  const Tensor diff = sub(gather_rows(expectation, rows), Tensor::from_data({k, 2}, std::move(targets)));
  const Tensor sq = sum(mul(diff, diff), 1);
  term.value = mean(mul(sq, Tensor::from_data({k, 1}, std::move(weights))));
  return term;
}

BatchResult compute_losses(const ModelParams& params, const Config& config, const std::vector<SyntheticPair>& pairs,
                           const LossOptions& options) {
  if (pairs.empty()) throw DimensionError("compute_losses: empty batch");
  const std::size_t height = pairs[0].image_a.height, width = pairs[0].image_a.width;
  std::vector<const Image*> images_a, images_b;
  for (const SyntheticPair& p : pairs) {
    images_a.push_back(&p.image_a);
    images_b.push_back(&p.image_b);
  }
  const CoarseStage stage = forward_coarse(params, config, images_a, images_b);
  const std::size_t n = stage.features.coarse_height * stage.features.coarse_width;

  BatchResult result;
  std::vector<std::vector<CellPair>> truth;
  std::vector<FineRequest> requests;
  const auto prob = stage.confidence.prob.values();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    truth.push_back(gt_coarse_matches(pairs[p].geometry, height, width));
    const std::set<std::pair<std::size_t, std::size_t>> truth_set = [&] {
      std::set<std::pair<std::size_t, std::size_t>> s;
      for (const CellPair& c : truth.back()) s.insert({c.a, c.b});
      return s;
    }();
    const std::vector<CoarseMatch> predicted = select_matches(prob.subspan(p * n * n, n * n), n, n, config.theta_c);
    result.truth_pairs += truth_set.size();
    result.predicted += predicted.size();
    std::vector<FineRequest> supervised;
    for (const CoarseMatch& m : predicted)
      if (truth_set.count({m.a, m.b})) {
        ++result.true_positives;
        supervised.push_back({p, m});
      }
    if (options.supervision == FineSupervision::Truth || (supervised.empty() && options.teacher_forcing)) {
      supervised.clear();
      for (const CellPair& c : truth.back()) supervised.push_back({p, {c.a, c.b, 1.0}});
    }
    requests.insert(requests.end(), supervised.begin(), supervised.end());
  }

  const LossTerm lc = coarse_loss(stage.confidence, truth);
  result.notes = lc.skipped;

  const FineBatch fine = refine_requests(stage.features, requests, params.fine, fine_attention_options(config),
                                         config.window);
  for (const DroppedMatch& d : fine.dropped) result.notes.push_back("fine: " + d.reason);
  LossTerm lf;
  if (!fine.kept.empty()) {
    std::vector<std::optional<Point2>> offsets;
    const auto var = fine.refinement.variance.values();
    result.variance.assign(var.begin(), var.end());
    for (std::size_t row = 0; row < fine.kept.size(); ++row) {
      const FineRequest& req = requests[fine.kept[row]];
      const auto target = gt_fine_target({req.match.a, req.match.b}, pairs[req.pair].geometry, height, width,
                                         config.window);
      if (!target) {
        offsets.emplace_back();
        continue;
      }
      const WindowPlacement c = fine.centers_b[row];
      offsets.push_back(Point2{target->x - double(c.col), target->y - double(c.row)});
      const Point2 predicted = refined_point_b(fine, row);
      const Point2 expected = warp(pairs[req.pair].geometry, fine.points_a[row]);
      result.fine_epe_sum += std::sqrt(squared(predicted.x - expected.x) + squared(predicted.y - expected.y));
    }
    lf = fine_loss(fine.refinement.expectation, fine.refinement.variance, offsets, options.frozen_variance);
  } else {
    lf.skipped.push_back("no refined matches");
  }
  for (const std::string& s : lf.skipped) result.notes.push_back("fine: " + s);
  result.fine_supervised = lf.count;

  if (lc.value.defined()) result.coarse_loss = lc.value.item();
  if (lf.value.defined()) result.fine_loss = lf.value.item();
  if (lc.value.defined() && lf.value.defined()) result.total = add(lc.value, lf.value);
  else if (lc.value.defined()) result.total = lc.value;
  else if (lf.value.defined()) result.total = lf.value;
  return result;
}

Adam::Adam(std::vector<Tensor> params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_)), c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& impl = *params_[k].impl();
    if (impl.grad.empty()) continue;
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (std::size_t i = 0; i < impl.data.size(); ++i) {
      const double g = impl.grad[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
      impl.data[i] -= static_cast<real>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
    }
    params_[k].zero_grad();
  }
}

std::uint64_t training_pair_seed(const Config& config, std::size_t index) { return derive_seed(config.seed, 7, index); }

std::vector<SyntheticPair> training_batch(const Config& config, std::size_t step) {
  std::vector<SyntheticPair> batch;
  for (std::size_t b = 0; b < config.batch_size; ++b)
    batch.push_back(synth_pair(training_pair_seed(config, step * config.batch_size + b), config.image_height,
                               config.image_width, config.geometry));
  return batch;
}

namespace {

void dump_divergence(const std::filesystem::path& path, std::size_t step, const BatchResult& r,
                     const std::vector<SyntheticPair>& batch) {
  std::ofstream out(path);
  out << "non-finite loss at step " << step << "\n";
  out << "L_c=" << r.coarse_loss << " L_f=" << r.fine_loss << "\n";
  for (const SyntheticPair& p : batch) {
    out << "pair seed " << p.seed << " homography " << format_homography(as_homography(p.geometry));
  }
  for (const std::string& note : r.notes) out << note << "\n";
}

}  // namespace

std::vector<StepMetrics> train(ModelParams& params, const Config& config, const TrainHooks& hooks) {
  config.validate();
  Adam optimizer(parameter_list(params), config.learning_rate);
  LossOptions options;
  options.supervision = config.fine_supervision;
  options.teacher_forcing = config.teacher_forcing;
  std::vector<StepMetrics> trace;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::vector<SyntheticPair> batch = training_batch(config, step);
    StepMetrics metrics;
    metrics.step = step + 1;
    Tape tape;
    BatchResult r;
    {
      TapeScope scope(tape);
      r = compute_losses(params, config, batch, options);
    }
    if (!std::isfinite(r.coarse_loss) || !std::isfinite(r.fine_loss) || (r.total.defined() && !r.total.all_finite())) {
      dump_divergence(hooks.divergence_dump, step + 1, r, batch);
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) + "; batch dumped to " +
                            hooks.divergence_dump.string());
    }
    if (r.total.defined()) {
      tape.backward(r.total);
      optimizer.step();
    }
    metrics.coarse_loss = r.coarse_loss;
    metrics.fine_loss = r.fine_loss;
    metrics.coarse_precision = r.predicted ? double(r.true_positives) / double(r.predicted) : 0.0;
    metrics.coarse_recall = r.truth_pairs ? double(r.true_positives) / double(r.truth_pairs) : 0.0;
    metrics.fine_epe = r.fine_supervised ? r.fine_epe_sum / double(r.fine_supervised) : 0.0;
    trace.push_back(metrics);
    if (hooks.on_step) hooks.on_step(metrics);
  }
  return trace;
}

std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

void write_metrics_csv(std::ostream& out, const std::vector<StepMetrics>& trace) {
  out << "step,L_c,L_f,coarse_precision,coarse_recall,fine_epe\n";
  for (const StepMetrics& m : trace)
    out << m.step << ',' << format_metric(m.coarse_loss) << ',' << format_metric(m.fine_loss) << ','
        << format_metric(m.coarse_precision) << ',' << format_metric(m.coarse_recall) << ','
        << format_metric(m.fine_epe) << '\n';
}

}  // namespace loftr::LOFTR_PRECISION
