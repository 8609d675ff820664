#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loftr/config.hpp"

namespace loftr::cli {

/// Ordered key=value settings (config file first, then command line).
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Runs every named invariant; prints one line per property. Returns 0 iff
/// all pass.
int cmd_selftest(const Config& config, std::ostream& out);

/// Central-difference checks in double precision (and, with
/// `single_precision`, the same suite in single precision for reference).
int cmd_gradcheck(std::ostream& out, double tolerance, bool single_precision);

/// Trains from a seeded initialization, writes config.checkpoint and
/// config.metrics, then reports held-out coarse precision/recall and EPE.
int cmd_train(const Config& config, std::ostream& out);

struct MatchPaths {
  std::filesystem::path checkpoint;
  std::filesystem::path image_a;
  std::filesystem::path image_b;
  std::filesystem::path output;
  std::optional<std::filesystem::path> coarse_output;
  std::optional<std::filesystem::path> confidence_output;
};

/// Writes x_A,y_A,x_B,y_B,confidence,variance per refined match.
int cmd_match(const MatchPaths& paths, const Overrides& overrides, std::ostream& out);

/// Evaluates the checkpoint on a seeded synthetic suite described by the
/// stored config plus `overrides`; writes per-pair CSV to `output` and prints
/// the AUC table.
int cmd_eval(const std::filesystem::path& checkpoint, const Overrides& overrides,
             const std::filesystem::path& output, std::ostream& out);

/// Applies `overrides` to a checkpoint's stored config. Changing an
/// architecture key raises ConfigError.
Config checkpoint_config(const Config& stored, const Overrides& overrides);

struct BenchOptions {
  std::vector<std::size_t> sizes{1024, 2048, 4096};
  std::size_t head_dim = 16;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t n = 0;
  double t_vanilla = 0;  // seconds, median
  double t_linear = 0;
};

std::vector<BenchRow> bench_attention(const BenchOptions& options);
/// Max abs difference between linear attention and its explicit
/// quadratic-form evaluation at N = M = n, relative to the largest output.
double linear_attention_oracle_gap(std::size_t n, std::size_t head_dim, std::uint64_t seed);

/// CSV N,t_vanilla,t_linear to `csv`, plus the equivalence spot-check line to
/// `out`.
int cmd_bench_attention(const BenchOptions& options, std::ostream& csv, std::ostream& out);

/// Config keys that fix the architecture stored in a checkpoint.
bool is_architecture_key(const std::string& key);

}  // namespace loftr::cli
