#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "loftr/synthetic.hpp"

namespace loftr {

enum class MatcherKind { DualSoftmax, OptimalTransport };
enum class AttentionKind { Linear, Vanilla, Conv };
/// Which coarse pairs feed the fine loss during training.
enum class FineSupervision { PredictedAndTruth, Truth };

/// Every tunable of the model, training run and evaluation. Serialized as
/// key=value lines.
struct Config {
  // architecture
  std::size_t d_coarse = 64;
  std::size_t d_fine = 32;
  std::size_t heads = 4;
  std::size_t n_coarse = 4;
  std::size_t n_fine = 1;
  std::size_t window = 5;
  double temperature = 0.1;
  MatcherKind matcher = MatcherKind::DualSoftmax;
  std::size_t sinkhorn_iters = 3;
  double theta_c = 0.2;
  AttentionKind coarse_attention = AttentionKind::Linear;
  AttentionKind fine_attention = AttentionKind::Vanilla;
  bool pe_per_layer = false;
  bool normalize_features = true;

  // training
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  FineSupervision fine_supervision = FineSupervision::PredictedAndTruth;
  bool teacher_forcing = true;
  GeometryRanges geometry;
  /// Held-out pairs scored after training.
  std::size_t validation_pairs = 50;
  std::uint64_t validation_seed = 2;

  // evaluation
  std::size_t eval_pairs = 100;
  std::uint64_t eval_seed = 1;
  double ransac_threshold = 3.0;
  std::size_t ransac_iterations = 1000;

  // paths
  std::string checkpoint = "model.lftc";
  std::string metrics = "metrics.csv";

  /// Throws ConfigError naming the first offending key.
  void validate() const;
};

std::vector<std::string> config_keys();

/// Sets one key from its text form. Unknown keys and malformed values raise
/// ConfigError naming the key.
void set_config_value(Config& config, const std::string& key, const std::string& value);
std::string get_config_value(const Config& config, const std::string& key);

/// key=value lines; '#' starts a comment; blank lines ignored. Keys are not
/// checked here.
std::vector<std::pair<std::string, std::string>> parse_config_entries(const std::string& text);
Config parse_config(const std::string& text, Config base = {});
std::string read_config_text(const std::filesystem::path& path);
Config load_config(const std::filesystem::path& path, Config base = {});
/// Round-trips through parse_config.
std::string format_config(const Config& config);

}  // namespace loftr
