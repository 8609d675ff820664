#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "loftr/commands.hpp"
#include "loftr/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kFailed = 1, kConfigError = 2, kInputError = 3, kRuntimeError = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace loftr;

  CLI::App app{"Coarse-to-fine transformer feature matching on synthetic image pairs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);

  // Every config key is a long option; precedence is command line > file > defaults.
  std::map<std::string, std::string> cli_values;
  std::vector<std::pair<std::string, CLI::Option*>> key_options;
  const Config defaults;
  for (const std::string& key : config_keys()) {
    CLI::Option* opt = app.add_option("--" + key, cli_values[key],
                                      "config key (default " + get_config_value(defaults, key) + ")");
    opt->group("Config keys");
    key_options.emplace_back(key, opt);
  }

  auto* selftest = app.add_subcommand("selftest", "Run the built-in invariant suite");

  auto* gradcheck = app.add_subcommand("gradcheck", "Central-difference gradient checks");
  double tolerance = 1e-3;
  bool single_precision = false;
  gradcheck->add_option("--tolerance", tolerance, "Max relative error")->capture_default_str();
  gradcheck->add_flag("--single-precision", single_precision, "Also run the suite in single precision");

  auto* train = app.add_subcommand("train", "Train on seeded synthetic pairs");

  auto* match = app.add_subcommand("match", "Match two PGM images with a trained checkpoint");
  cli::MatchPaths match_paths;
  std::string match_output = "matches.csv", coarse_output, confidence_output;
  std::string image_a, image_b;
  match->add_option("image_a", image_a, "First image (PGM)")->required();
  match->add_option("image_b", image_b, "Second image (PGM)")->required();
  match->add_option("--output,-o", match_output, "Refined matches CSV")->capture_default_str();
  match->add_option("--coarse-output", coarse_output, "Also write the coarse matches as CSV");
  match->add_option("--confidence-output", confidence_output, "Also write the confidence matrix (LFTB tensor)");

  auto* eval = app.add_subcommand("eval", "Homography estimation benchmark on a seeded synthetic suite");
  std::string eval_output = "eval.csv";
  eval->add_option("--output,-o", eval_output, "Per-pair results CSV")->capture_default_str();

  auto* bench = app.add_subcommand("bench-attention", "Time vanilla against linear attention");
  cli::BenchOptions bench_options;
  std::string bench_output;
  bench->add_option("--sizes", bench_options.sizes, "Token counts, ascending")->delimiter(',')->capture_default_str();
  bench->add_option("--head-dim", bench_options.head_dim, "Channels per head")->capture_default_str();
  bench->add_option("--repeats", bench_options.repeats, "Timed repetitions per size")->capture_default_str();
  bench->add_option("--output,-o", bench_output, "Timing CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    cli::Overrides overrides;
    if (!config_path.empty()) overrides = parse_config_entries(read_config_text(config_path));
    for (const auto& [key, opt] : key_options)
      if (opt->count() > 0) overrides.emplace_back(key, cli_values[key]);

    Config config;
    for (const auto& [key, value] : overrides) set_config_value(config, key, value);

    if (selftest->parsed()) return cli::cmd_selftest(config, std::cout);
    if (gradcheck->parsed()) return cli::cmd_gradcheck(std::cout, tolerance, single_precision);
    if (train->parsed()) return cli::cmd_train(config, std::cout);
    if (match->parsed()) {
      match_paths.checkpoint = config.checkpoint;
      match_paths.image_a = image_a;
      match_paths.image_b = image_b;
      match_paths.output = match_output;
      if (!coarse_output.empty()) match_paths.coarse_output = coarse_output;
      if (!confidence_output.empty()) match_paths.confidence_output = confidence_output;
      return cli::cmd_match(match_paths, overrides, std::cout);
    }
    if (eval->parsed()) return cli::cmd_eval(config.checkpoint, overrides, eval_output, std::cout);
    if (bench->parsed()) {
      bench_options.seed = config.seed;
      if (bench_output.empty()) return cli::cmd_bench_attention(bench_options, std::cout, std::cerr);
      std::ofstream csv(bench_output);
      if (!csv) throw InputError("cannot write " + bench_output);
      return cli::cmd_bench_attention(bench_options, csv, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const DimensionError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kFailed;
}
