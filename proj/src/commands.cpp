#include "loftr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <set>

#include "loftr/attention.hpp"
#include "loftr/checkpoint.hpp"
#include "loftr/evaluation.hpp"
#include "loftr/gradient_suite.hpp"
#include "loftr/image.hpp"
#include "loftr/tensor_io.hpp"
#include "loftr/training.hpp"

namespace loftr::cli {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<real> values(shape_numel(shape));
  for (real& v : values) v = real(dist(rng));
  return Tensor::from_data(std::move(shape), std::move(values));
}

template <class F>
double median_seconds(std::size_t repeats, F&& f) {
  std::vector<double> times;
  for (std::size_t i = 0; i < std::max<std::size_t>(repeats, 1); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace

bool is_architecture_key(const std::string& key) {
  static const std::set<std::string> keys = {
      "d_coarse", "d_fine", "heads", "n_coarse", "n_fine", "window", "matcher", "coarse_attention",
      "fine_attention", "pe_per_layer", "normalize_features"};
  return keys.count(key) > 0;
}

int cmd_gradcheck(std::ostream& out, double tolerance, bool single_precision) {
  auto report = [&](const char* label, const std::vector<GradientCheckEntry>& entries) {
    std::size_t failed = 0;
    for (const GradientCheckEntry& e : entries) {
      char line[256];
      std::snprintf(line, sizeof line, "%s %-40s max_rel_err=%.3e components=%zu", e.passed ? "PASS" : "FAIL",
                    e.name.c_str(), e.max_rel_err, e.components);
      out << line << "\n";
      failed += !e.passed;
    }
    out << label << ": " << entries.size() - failed << "/" << entries.size() << " checks below " << tolerance
        << "\n";
    return failed;
  };
  std::size_t failed = report("double precision", f64::run_gradient_suite(tolerance));
  if (single_precision) failed += report("single precision", f32::run_gradient_suite(tolerance));
  return failed == 0 ? 0 : 1;
}

int cmd_train(const Config& config, std::ostream& out) {
  config.validate();
  ModelParams params = init_model(config, config.seed);
  out << "training " << parameter_count(params) << " parameters for " << config.steps << " steps\n";
  TrainHooks hooks;
  hooks.divergence_dump = std::filesystem::path(config.checkpoint).string() + ".divergence.txt";
  hooks.on_step = [&](const StepMetrics& m) {
    if (m.step % 100 == 0 || m.step == config.steps)
      out << "step " << m.step << " L_c=" << fixed(m.coarse_loss, 4) << " L_f=" << fixed(m.fine_loss, 4)
          << " precision=" << fixed(m.coarse_precision, 3) << " recall=" << fixed(m.coarse_recall, 3)
          << " fine_epe=" << fixed(m.fine_epe, 3) << "\n"
          << std::flush;
  };
  const std::vector<StepMetrics> trace = train(params, config, hooks);
  save_checkpoint(config.checkpoint, config, params);
  {
    std::ofstream metrics = open_output(config.metrics);
    write_metrics_csv(metrics, trace);
  }
  if (config.validation_pairs > 0) {
    const MatchingEvaluation ev = evaluate_matching(params, config, config.validation_pairs, config.validation_seed);
    out << "held-out pairs=" << ev.pairs << " coarse_precision=" << fixed(ev.precision, 4)
        << " coarse_recall=" << fixed(ev.recall, 4) << " fine_epe=" << fixed(ev.fine_epe, 4)
        << " coarse_only_epe=" << fixed(ev.coarse_epe, 4) << "\n";
  }
  out << "wrote " << config.checkpoint << " and " << config.metrics << "\n";
  return 0;
}

Config checkpoint_config(const Config& stored, const Overrides& overrides) {
  Config config = stored;
  for (const auto& [key, value] : overrides) {
    const std::string before = get_config_value(config, key);
    set_config_value(config, key, value);
    if (is_architecture_key(key) && get_config_value(config, key) != before)
      throw ConfigError("config key '" + key + "' is fixed by the checkpoint (" + before + ")");
  }
  config.validate();
  return config;
}

int cmd_match(const MatchPaths& paths, const Overrides& overrides, std::ostream& out) {
  Checkpoint ckpt = load_checkpoint(paths.checkpoint);
  ckpt.config = checkpoint_config(ckpt.config, overrides);
  const Image a = read_pgm(paths.image_a);
  const Image b = read_pgm(paths.image_b);
  const MatchResult result = match_pair(ckpt.params, ckpt.config, a, b);

  std::ofstream csv = open_output(paths.output);
  csv << "x_A,y_A,x_B,y_B,confidence,variance\n";
  char line[256];
  for (const FineMatch& m : result.fine.matches) {
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.point_a.x, m.point_a.y, m.point_b.x,
                  m.point_b.y, m.confidence, m.variance);
    csv << line;
  }
  if (paths.coarse_output) {
    std::ofstream coarse = open_output(*paths.coarse_output);
    coarse << "cell_A,cell_B,x_A,y_A,x_B,y_B,confidence\n";
    const std::size_t w = result.coarse_width;
    for (const CoarseMatch& m : result.coarse) {
      std::snprintf(line, sizeof line, "%zu,%zu,%.1f,%.1f,%.1f,%.1f,%.6f\n", m.a, m.b, 8.0 * double(m.a % w) + 3.5,
                    8.0 * double(m.a / w) + 3.5, 8.0 * double(m.b % w) + 3.5, 8.0 * double(m.b / w) + 3.5,
                    m.confidence);
      coarse << line;
    }
  }
  if (paths.confidence_output) save_tensor(*paths.confidence_output, result.confidence);
  out << result.coarse.size() << " coarse matches, " << result.fine.matches.size() << " refined, "
      << result.fine.dropped.size() << " dropped at the border\n";
  return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint, const Overrides& overrides,
             const std::filesystem::path& output, std::ostream& out) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  const Config config = checkpoint_config(ckpt.config, overrides);
  const HomographyEvaluation ev = evaluate_homography(ckpt.params, config, config.eval_pairs, config.eval_seed);
  {
    std::ofstream csv = open_output(output);
    write_evaluation_csv(csv, ev);
  }
  write_evaluation_table(out, ev);
  return 0;
}

double linear_attention_oracle_gap(std::size_t n, std::size_t head_dim, std::uint64_t seed) {
  NoTapeScope no_tape;
  std::mt19937_64 rng(seed);
  const Tensor q = random_tensor({1, n, head_dim}, rng);
  const Tensor k = random_tensor({1, n, head_dim}, rng);
  const Tensor v = random_tensor({1, n, head_dim}, rng);
  const std::vector<real> fast = linear_attention(q, k, v).to_vector();
  auto phi = [](double x) { return x > 0 ? x + 1 : std::exp(x); };
  const auto qv = q.values(), kv = k.values(), vv = v.values();
  double worst = 0, scale = 0;
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < head_dim; ++c) s += phi(qv[i * head_dim + c]) * phi(kv[j * head_dim + c]);
      weights[j] = s;
      total += s;
    }
    for (std::size_t c = 0; c < head_dim; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += weights[j] * vv[j * head_dim + c];
      const double expected = acc / total;
      const double got = fast[i * head_dim + c];
      worst = std::max(worst, std::abs(got - expected));
      scale = std::max(scale, std::abs(expected));
    }
  }
  return worst / scale;
}

std::vector<BenchRow> bench_attention(const BenchOptions& options) {
  for (std::size_t i = 1; i < options.sizes.size(); ++i)
    if (options.sizes[i] <= options.sizes[i - 1]) throw ConfigError("bench sizes must be strictly ascending");
  NoTapeScope no_tape;
  std::mt19937_64 rng(options.seed);
  std::vector<BenchRow> rows;
  for (std::size_t n : options.sizes) {
    const Tensor q = random_tensor({1, n, options.head_dim}, rng);
    const Tensor k = random_tensor({1, n, options.head_dim}, rng);
    const Tensor v = random_tensor({1, n, options.head_dim}, rng);
    BenchRow row;
    row.n = n;
    row.t_vanilla = median_seconds(options.repeats, [&] { (void)vanilla_attention(q, k, v); });
    row.t_linear = median_seconds(options.repeats, [&] { (void)linear_attention(q, k, v); });
    rows.push_back(row);
  }
  return rows;
}

int cmd_bench_attention(const BenchOptions& options, std::ostream& csv, std::ostream& out) {
  const double gap = linear_attention_oracle_gap(128, options.head_dim, options.seed);
  const bool equivalent = gap < 1e-5;
  out << "equivalence N=128: max_rel_diff=" << gap << (equivalent ? " PASS" : " FAIL") << "\n";
  const std::vector<BenchRow> rows = bench_attention(options);
  csv << "N,t_vanilla,t_linear\n";
  char line[128];
  for (const BenchRow& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", r.n, r.t_vanilla, r.t_linear);
    csv << line;
  }
  return equivalent ? 0 : 1;
}

}  // namespace loftr::cli
