#include "loftr/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include "loftr/synthetic.hpp"
#include "loftr/training.hpp"

namespace loftr::LOFTR_PRECISION {

std::uint64_t matching_pair_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, 13, index); }
std::uint64_t homography_pair_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, 11, index); }

MatchingEvaluation evaluate_matching(const ModelParams& params, const Config& config, std::size_t pairs,
                                     std::uint64_t seed) {
  MatchingEvaluation ev;
  ev.pairs = pairs;
  double fine_sum = 0, coarse_sum = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const SyntheticPair pair =
        synth_pair(matching_pair_seed(seed, i), config.image_height, config.image_width, config.geometry);
    const MatchResult result = match_pair(params, config, pair.image_a, pair.image_b);
    const std::vector<CellPair> truth = gt_coarse_matches(pair.geometry, config.image_height, config.image_width);
    std::set<std::pair<std::size_t, std::size_t>> truth_set;
    for (const CellPair& c : truth) truth_set.insert({c.a, c.b});
    ev.truth += truth.size();
    ev.predicted += result.coarse.size();
    for (const CoarseMatch& m : result.coarse) ev.true_positives += truth_set.count({m.a, m.b});
    for (const FineMatch& f : result.fine.matches) {
      const Point2 expected = warp(pair.geometry, f.point_a);
      const Point2 coarse_b{8.0 * double(f.cell_b % result.coarse_width) + 3.5,
                            8.0 * double(f.cell_b / result.coarse_width) + 3.5};
      fine_sum += std::hypot(f.point_b.x - expected.x, f.point_b.y - expected.y);
      coarse_sum += std::hypot(coarse_b.x - expected.x, coarse_b.y - expected.y);
      ++ev.fine_matches;
    }
  }
  ev.precision = ev.predicted ? double(ev.true_positives) / double(ev.predicted) : 0.0;
  ev.recall = ev.truth ? double(ev.true_positives) / double(ev.truth) : 0.0;
  if (ev.fine_matches) {
    ev.fine_epe = fine_sum / double(ev.fine_matches);
    ev.coarse_epe = coarse_sum / double(ev.fine_matches);
  }
  return ev;
}

HomographyEvaluation evaluate_homography(const ModelParams& params, const Config& config, std::size_t pairs,
                                         std::uint64_t seed) {
  if (pairs == 0) throw UndefinedInputError("evaluation: the suite must contain at least one pair");
  HomographyEvaluation ev;
  std::vector<double> errors;
  for (std::size_t i = 0; i < pairs; ++i) {
    PairEvaluation pe;
    pe.index = i;
    pe.seed = homography_pair_seed(seed, i);
    const SyntheticPair pair = synth_pair(pe.seed, config.image_height, config.image_width, config.geometry);
    const MatchResult result = match_pair(params, config, pair.image_a, pair.image_b);
    pe.coarse_matches = result.coarse.size();
    pe.fine_matches = result.fine.matches.size();
    std::vector<Correspondence> correspondences;
    for (const FineMatch& f : result.fine.matches) correspondences.push_back({f.point_a, f.point_b, f.confidence});
    RansacOptions options;
    options.inlier_threshold = config.ransac_threshold;
    options.iterations = config.ransac_iterations;
    options.seed = pe.seed;
    const RansacResult fit = ransac_homography(correspondences, options);
    pe.success = fit.success;
    pe.inliers = fit.inlier_count;
    pe.corner_error = std::numeric_limits<double>::infinity();
    if (fit.success) {
      try {
        pe.corner_error = corner_error(fit.homography, as_homography(pair.geometry), config.image_height,
                                       config.image_width);
      } catch (const GeometryError&) {
        pe.success = false;
      }
    }
    if (!pe.success) ++ev.failures;
    errors.push_back(pe.corner_error);
    ev.pairs.push_back(pe);
  }
  ev.auc3 = auc(errors, 3.0);
  ev.auc5 = auc(errors, 5.0);
  ev.auc10 = auc(errors, 10.0);
  return ev;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_evaluation_csv(std::ostream& out, const HomographyEvaluation& ev) {
  out << "pair,seed,coarse_matches,fine_matches,inliers,success,corner_error\n";
  for (const PairEvaluation& p : ev.pairs)
    out << p.index << ',' << p.seed << ',' << p.coarse_matches << ',' << p.fine_matches << ',' << p.inliers << ','
        << (p.success ? 1 : 0) << ',' << fmt(p.corner_error) << '\n';
  out << "# auc@3=" << fmt(ev.auc3) << " auc@5=" << fmt(ev.auc5) << " auc@10=" << fmt(ev.auc10)
      << " failures=" << ev.failures << '\n';
}

void write_evaluation_table(std::ostream& out, const HomographyEvaluation& ev) {
  std::size_t matches = 0;
  for (const PairEvaluation& p : ev.pairs) matches += p.fine_matches;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-10s %-10s %-10s %-12s\n", "AUC@3px", "AUC@5px", "AUC@10px", "failures",
                "matches/pair");
  out << line;
  std::snprintf(line, sizeof line, "%-10.4f %-10.4f %-10.4f %-10zu %-12.1f\n", ev.auc3, ev.auc5, ev.auc10, ev.failures,
                ev.pairs.empty() ? 0.0 : double(matches) / double(ev.pairs.size()));
  out << line;
}

}  // namespace loftr::LOFTR_PRECISION
