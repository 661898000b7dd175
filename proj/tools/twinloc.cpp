// twinloc: generate synthetic grounding data, train, evaluate, analyze.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twinloc/commands.hpp"

namespace {

using namespace twinloc;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI config file (built-in defaults when omitted)");
  cmd->add_option("--seed", c.seed, "Override the seed this command draws from");
  cmd->add_option("--threads", c.threads, "Worker threads (results do not depend on it)");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig::defaults() : load_config(c.config);
  if (c.threads) {
    if (*c.threads == 0) throw ConfigError("--threads must be >= 1");
    cfg.train.threads = cfg.eval.threads = *c.threads;
  }
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Twin-head temporal grounding with bias-aware sample reweighing"};
  app.require_subcommand(1);

  Common common;
  std::string out, data, other, checkpoint, train_mode, eval_mode = "full", cross_data;
  std::vector<double> alphas;
  bool inject_fault = false;

  auto* gen = app.add_subcommand("generate", "Write train, cross-test and in-scenario test sets");
  add_common(gen, common);
  gen->add_option("--out", out, "Output directory (default: [data] dir)");

  auto* tr = app.add_subcommand("train", "Train both heads and write a checkpoint");
  add_common(tr, common);
  tr->add_option("--data", data, "Training set (default: <data dir>/train.jsonl)");
  tr->add_option("--out", out, "Checkpoint path")->required();
  tr->add_option("--mode", train_mode, "tll or debias (default: [train] mode)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  ev->add_option("--data", data, "Evaluation set")->required();
  ev->add_option("--mode", eval_mode, "full, video_only, query_masked or random (default: full)");
  ev->add_option("--out", out, "Report prefix; writes <out>.json and <out>.csv")->required();

  auto* an = app.add_subcommand("analyze", "Bias report for an existing dataset");
  add_common(an, common);
  an->add_option("--data", data, "Dataset to analyze")->required();
  an->add_option("--other", other, "Second dataset for the interval overlap");
  an->add_option("--out", out, "Report prefix")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on a tiny instance");
  add_common(gc, common);
  gc->add_flag("--inject-fault", inject_fault, "Perturb the analytic gradient (must fail)");

  auto* sw = app.add_subcommand("sweep-alpha", "Train one debias model per alpha and seed");
  add_common(sw, common);
  sw->add_option("--data", data, "Training set (default: <data dir>/train.jsonl)");
  sw->add_option("--cross-data", cross_data, "Cross-test set (default: <data dir>/cross_test.jsonl)");
  sw->add_option("--alphas", alphas, "Comma-separated alphas (default: [sweep] alphas)")
      ->delimiter(',');
  sw->add_option("--out", out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    ExperimentConfig cfg = load(common);
    std::ostream& log = std::cout;

    if (gen->parsed()) {
      if (common.seed) cfg.scenario_train.seed = cfg.scenario_test.seed = *common.seed;
      cmd_generate(cfg, out.empty() ? cfg.data.dir : std::filesystem::path(out), log);
    } else if (tr->parsed()) {
      if (common.seed) cfg.train.seed = *common.seed;
      if (!train_mode.empty()) cfg.train.mode = train_mode_from_string(train_mode);
      cmd_train(cfg, data.empty() ? cfg.data.train_path() : std::filesystem::path(data), out, log);
    } else if (ev->parsed()) {
      if (common.seed) cfg.eval.seed = *common.seed;
      cmd_eval(cfg, checkpoint, data, eval_mode_from_string(eval_mode), out, log);
    } else if (an->parsed()) {
      std::optional<std::filesystem::path> o;
      if (!other.empty()) o = other;
      cmd_analyze(cfg, data, o, out, log);
    } else if (gc->parsed()) {
      if (common.seed) cfg.gradcheck.seed = *common.seed;
      return cmd_gradcheck(cfg, inject_fault, log).passed ? kExitOk : kExitRuntime;
    } else if (sw->parsed()) {
      if (common.seed) cfg.train.seed = *common.seed;
      if (!alphas.empty()) cfg.sweep.alphas = alphas;
      cfg.validate();
      cmd_sweep_alpha(cfg, data.empty() ? cfg.data.train_path() : std::filesystem::path(data),
                      cross_data.empty() ? cfg.data.cross_path() : std::filesystem::path(cross_data),
                      out, log);
    }
    return kExitOk;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::invalid_argument& e) {
    // ConfigError and ContractViolation both land here.
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
