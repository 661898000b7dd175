#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinloc/encoders.hpp"
#include "twinloc/evaluation.hpp"
#include "twinloc/synthbench.hpp"
#include "twinloc/trainer.hpp"

namespace twinloc {

/// Malformed or invalid configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::filesystem::path dir = "data";
  std::size_t n_train = 2000;
  std::size_t n_cross = 500;
  std::size_t n_intest = 500;
  /// Bins per axis of the bias report interval histogram.
  std::size_t report_grid = 10;
  std::size_t top_k = 5;

  std::filesystem::path train_path() const { return dir / "train.jsonl"; }
  std::filesystem::path cross_path() const { return dir / "cross_test.jsonl"; }
  std::filesystem::path intest_path() const { return dir / "in_test.jsonl"; }
};

struct SweepConfig {
  std::vector<double> alphas{0.25, 0.5, 1.0, 1.75, 64.0};
  /// Seeds per alpha; run r uses derive_seed(train.seed, r).
  std::size_t runs = 3;
};

struct GradCheckConfig {
  std::size_t n_clips = 3;
  std::size_t dim = 4;
  std::size_t vocab_size = 8;
  std::size_t bm_samples = 4;
  std::uint64_t seed = 5;
  double threshold = 1e-4;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  ScenarioSpec scenario_train;
  ScenarioSpec scenario_test;
  DataConfig data;
  SweepConfig sweep;
  GradCheckConfig gradcheck;

  /// Built-in defaults: the shipped scenario pair and training setup.
  static ExperimentConfig defaults();

  /// Throws ConfigError when any section is inconsistent.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Applies an INI document on top of the defaults. Sections: model, train,
/// labels, eval, scenario_train, scenario_test, data, sweep, gradcheck.
/// Unknown sections or keys raise ConfigError.
ExperimentConfig parse_config(const std::string& ini_text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace twinloc
