#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "twinloc/checkpoint.hpp"
#include "twinloc/config.hpp"
#include "twinloc/evaluation.hpp"
#include "twinloc/synthbench.hpp"
#include "twinloc/trainer.hpp"

namespace twinloc {

/// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitFormat = 3 };

struct GenerateOutputs {
  ScenarioPair data;
  BiasReport train_report;
  BiasReport cross_report;
  BiasReport intest_report;
};

/// Writes train.jsonl, cross_test.jsonl and in_test.jsonl into `out_dir`,
/// a bias report (JSON and CSV) per file, and overlap.json with the
/// pairwise interval-histogram overlaps.
GenerateOutputs cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& log);

ModelConfig model_config_from_json(const nlohmann::json& j);

/// Throws ConfigError unless every sample matches the model's clip count,
/// feature width and vocabulary.
void check_dataset_dims(const std::vector<GroundingSample>& ds, const ModelConfig& model);

/// Trains on the dataset at `data_path` and writes the checkpoint plus
/// `<checkpoint>.log.csv` with one row per epoch.
TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
                      const std::filesystem::path& out_checkpoint, std::ostream& log);

/// Evaluates a checkpoint, writes `<out_prefix>.json` and `<out_prefix>.csv`
/// and prints the metric table. The model shape comes from the checkpoint;
/// evaluation settings come from `cfg`.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_path, EvalMode mode,
                    const std::filesystem::path& out_prefix, std::ostream& log);

/// Bias report for one dataset file, optionally against a second one.
BiasReport cmd_analyze(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
                       const std::optional<std::filesystem::path>& other_path,
                       const std::filesystem::path& out_prefix, std::ostream& log);

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

struct GradCheckOutcome {
  std::vector<GradCheckCase> cases;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Finite-difference check of sample_loss on a seeded tiny instance, in TLL
/// mode, debias mode with a live weight, and debias mode with the weight
/// detached. `inject_fault` perturbs the analytic gradient so the check must
/// fail.
GradCheckOutcome cmd_gradcheck(const ExperimentConfig& cfg, bool inject_fault, std::ostream& log);

struct SweepRow {
  double alpha = 1.0;
  double r1_iou07 = 0.0;
  double r5_iou07 = 0.0;
  std::uint64_t seed = 0;
};

/// Seed of sweep run r.
std::uint64_t sweep_seed(std::uint64_t base, std::size_t run);

/// One debias model per (alpha, run), evaluated in full mode on the
/// cross-test set. Writes a CSV with header alpha,r1_iou0.7,r5_iou0.7,seed.
std::vector<SweepRow> cmd_sweep_alpha(const ExperimentConfig& cfg,
                                      const std::filesystem::path& train_path,
                                      const std::filesystem::path& cross_path,
                                      const std::filesystem::path& out_csv, std::ostream& log);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace twinloc
