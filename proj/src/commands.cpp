#include "twinloc/commands.hpp"

#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "twinloc/dataset_io.hpp"
#include "twinloc/rng.hpp"

namespace twinloc {

namespace {

void write_report(const std::filesystem::path& prefix, const BiasReport& r) {
  auto with = [&](const char* suffix) {
    auto p = prefix;
    p += suffix;
    return p;
  };
  write_file_atomic(with(".json"), r.to_json().dump(2) + "\n");
  write_file_atomic(with("_concepts.csv"), r.concept_csv());
  write_file_atomic(with("_intervals.csv"), r.interval_csv());
}

void print_report_summary(std::ostream& log, const std::string& name, const BiasReport& r) {
  log << name << ": " << r.n_samples << " samples; top concepts";
  for (const auto& [c, n] : r.top_concepts) log << ' ' << c << '(' << n << ')';
  log << "; top intervals";
  const double g = static_cast<double>(r.grid);
  for (const auto& [bins, n] : r.top_intervals) {
    log << " [" << static_cast<double>(bins.first) / g << ','
        << static_cast<double>(bins.second + 1) / g << ")(" << n << ')';
  }
  log << '\n';
}

std::filesystem::path with_suffix(std::filesystem::path p, const char* suffix) {
  p += suffix;
  return p;
}

}  // namespace

GenerateOutputs cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             std::ostream& log) {
  cfg.validate();
  GenerateOutputs out{cross_pair(cfg.scenario_train, cfg.scenario_test, cfg.data.n_train,
                                 cfg.data.n_cross, cfg.data.n_intest, cfg.train.threads),
                      {}, {}, {}};
  const auto& d = out.data;
  const auto g = cfg.data.report_grid;
  const auto k = cfg.data.top_k;
  out.train_report = bias_report(d.train, &d.cross_test, g, k);
  out.cross_report = bias_report(d.cross_test, &d.train, g, k);
  out.intest_report = bias_report(d.in_test, &d.train, g, k);

  save_dataset(out_dir / "train.jsonl", d.train);
  save_dataset(out_dir / "cross_test.jsonl", d.cross_test);
  save_dataset(out_dir / "in_test.jsonl", d.in_test);
  write_report(out_dir / "bias_train", out.train_report);
  write_report(out_dir / "bias_cross_test", out.cross_report);
  write_report(out_dir / "bias_in_test", out.intest_report);

  const nlohmann::json overlap = {
      {"grid", g},
      {"train_vs_cross_test", *out.train_report.overlap},
      {"train_vs_in_test", *out.intest_report.overlap},
  };
  write_file_atomic(out_dir / "overlap.json", overlap.dump(2) + "\n");

  print_report_summary(log, "train", out.train_report);
  print_report_summary(log, "cross_test", out.cross_report);
  print_report_summary(log, "in_test", out.intest_report);
  log << "interval overlap train/cross_test " << *out.train_report.overlap << ", train/in_test "
      << *out.intest_report.overlap << '\n';
  return out;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  try {
    m.n_clips = j.at("n_clips").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.bm_samples = j.at("bm_samples").get<std::size_t>();
    m.cell_prior = j.at("cell_prior").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config lacks a model section: ") + e.what());
  }
  return m;
}

void check_dataset_dims(const std::vector<GroundingSample>& ds, const ModelConfig& model) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds[i];
    if (s.video.n_clips() != model.n_clips || s.video.dim() != model.dim) {
      throw ConfigError("sample " + std::to_string(i) + " has " + std::to_string(s.video.n_clips()) +
                        " clips of width " + std::to_string(s.video.dim()) + ", model expects " +
                        std::to_string(model.n_clips) + " of width " + std::to_string(model.dim));
    }
    for (const auto t : s.query.ids) {
      if (t >= model.vocab_size) {
        throw ConfigError("sample " + std::to_string(i) + " uses token " + std::to_string(t) +
                          " outside vocab_size " + std::to_string(model.vocab_size));
      }
    }
  }
}

TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
                      const std::filesystem::path& out_checkpoint, std::ostream& log) {
  cfg.validate();
  const auto ds = load_dataset(data_path);
  if (ds.empty()) throw ConfigError("training set " + data_path.string() + " is empty");
  check_dataset_dims(ds, cfg.model);

  log << "training " << to_string(cfg.train.mode) << " (alpha " << cfg.train.alpha << ", seed "
      << cfg.train.seed << ") on " << ds.size() << " samples for " << cfg.train.epochs
      << " epochs\n";
  std::ostringstream csv;
  csv << "epoch,l_v,l_vs_raw,s,weight,l_total,empty_label_samples\n" << std::setprecision(17);
  auto result = train(ds, cfg.model, cfg.train, [&](const EpochRecord& e) {
    log << "epoch " << e.epoch << "  L_v " << e.l_v << "  L_vs " << e.l_vs_raw << "  s " << e.s
        << "  weight " << e.weight << "  L_t " << e.l_total << '\n';
    csv << e.epoch << ',' << e.l_v << ',' << e.l_vs_raw << ',' << e.s << ',' << e.weight << ','
        << e.l_total << ',' << e.empty_label_samples << '\n';
  });

  Checkpoint ckpt;
  ckpt.config = cfg.to_json();
  // Thread count does not affect results, so it stays out of the snapshot.
  ckpt.config["train"].erase("threads");
  ckpt.metadata = {{"seed", cfg.train.seed},
                   {"epochs", cfg.train.epochs},
                   {"mode", to_string(cfg.train.mode)},
                   {"alpha", cfg.train.alpha},
                   {"train_samples", ds.size()}};
  ckpt.params = result.params;
  save_checkpoint(out_checkpoint, ckpt);
  write_file_atomic(with_suffix(out_checkpoint, ".log.csv"), csv.str());
  log << "wrote " << out_checkpoint.string() << '\n';
  return result;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_path, EvalMode mode,
                    const std::filesystem::path& out_prefix, std::ostream& log) {
  cfg.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const ModelConfig model = model_config_from_json(ckpt.config.value("model", nlohmann::json{}));
  try {
    check_param_layout(ckpt.params, model);
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint parameters do not match its model config: ") + e.what());
  }
  const auto ds = load_dataset(data_path);
  check_dataset_dims(ds, model);

  const EvalReport report = evaluate(ckpt.params, model, ds, mode, cfg.eval);
  write_file_atomic(with_suffix(out_prefix, ".json"), report.to_json().dump(2) + "\n");
  write_file_atomic(with_suffix(out_prefix, ".csv"), report.to_csv());
  log << report.to_table();
  return report;
}

BiasReport cmd_analyze(const ExperimentConfig& cfg, const std::filesystem::path& data_path,
                       const std::optional<std::filesystem::path>& other_path,
                       const std::filesystem::path& out_prefix, std::ostream& log) {
  cfg.validate();
  const auto ds = load_dataset(data_path);
  std::vector<GroundingSample> other;
  if (other_path) other = load_dataset(*other_path);
  const BiasReport r =
      bias_report(ds, other_path ? &other : nullptr, cfg.data.report_grid, cfg.data.top_k);
  write_report(out_prefix, r);
  print_report_summary(log, data_path.filename().string(), r);
  if (r.overlap) log << "interval overlap " << *r.overlap << '\n';
  return r;
}

GradCheckOutcome cmd_gradcheck(const ExperimentConfig& cfg, bool inject_fault, std::ostream& log) {
  cfg.validate();
  const auto& gc = cfg.gradcheck;
  ModelConfig model;
  model.n_clips = gc.n_clips;
  model.dim = gc.dim;
  model.vocab_size = gc.vocab_size;
  model.bm_samples = gc.bm_samples;
  model.cell_prior = cfg.model.cell_prior;
  model.validate();

  // Random instance: features, a query of every non-null token, a gt span
  // on the clip grid, and parameters moved away from their initial values.
  std::mt19937_64 rng(derive_seed(gc.seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix video(model.n_clips, model.dim);
  for (auto& v : video.values()) v = normal(rng);
  GroundingSample sample;
  sample.video = ClipFeatureSequence(std::move(video));
  for (std::uint32_t t = 1; t < model.vocab_size && sample.query.ids.size() < 3; ++t) {
    sample.query.ids.push_back(t);
  }
  const ProposalGrid grid = model.grid();
  std::uniform_int_distribution<std::size_t> pick(0, grid.cell_count() - 1);
  sample.gt = interval_of(grid.cell(pick(rng)), model.n_clips);

  ParamStore params = init_params(model, gc.seed);
  std::uniform_real_distribution<double> jiggle(-0.5, 0.5);
  for (std::size_t i = 0; i < params.entry_count(); ++i) {
    auto values = params.values(i);
    const bool embedding = params.entry(i).name == param::kEmbedding;
    for (std::size_t k = embedding ? model.dim : 0; k < values.size(); ++k) values[k] += jiggle(rng);
  }

  const PreparedSample prepared = prepare_sample(sample, model, cfg.train.labels);

  struct Case {
    std::string name;
    TrainConfig train;
    bool freeze_weight;
  };
  TrainConfig base = cfg.train;
  base.stop_encoder_grad_from_visual = false;
  base.threads = 1;
  std::vector<Case> cases;
  {
    TrainConfig t = base;
    t.mode = TrainMode::tll;
    cases.push_back({"tll", t, false});
  }
  {
    TrainConfig t = base;
    t.mode = TrainMode::debias;
    t.detach_bias_weight = false;
    cases.push_back({"debias_live_weight", t, false});
  }
  {
    TrainConfig t = base;
    t.mode = TrainMode::debias;
    t.detach_bias_weight = true;
    cases.push_back({"debias_detached_weight", t, true});
  }

  GradCheckOutcome outcome;
  for (const auto& c : cases) {
    SampleLossOptions options;
    if (c.freeze_weight) {
      options.weight_override = sample_loss(prepared, params, model, c.train, nullptr).weight;
    }
    ParamStore analytic = params.zeros_like();
    sample_loss(prepared, params, model, c.train, &analytic, options);
    if (inject_fault) {
      for (std::size_t k = 0; k < analytic.total_size(); ++k) {
        analytic.set_flat(k, analytic.flat(k) * 1.01 + 1e-4);
      }
    }
    const ScalarLoss loss = [&](const ParamStore& p) {
      return sample_loss(prepared, p, model, c.train, nullptr, options).l_total;
    };
    GradCheckCase result{c.name, grad_check(loss, params, analytic)};
    outcome.max_rel_error = std::max(outcome.max_rel_error, result.report.max_rel_error);

    log << c.name << ": max relative error " << std::scientific << std::setprecision(3)
        << result.report.max_rel_error << '\n';
    for (const auto& [name, err] : result.report.per_entry) {
      log << "  " << std::left << std::setw(24) << name << ' ' << err << '\n';
    }
    log << std::defaultfloat << std::right;
    outcome.cases.push_back(std::move(result));
  }
  outcome.passed = outcome.max_rel_error < gc.threshold;
  log << (outcome.passed ? "PASS" : "FAIL") << ": max relative error " << std::scientific
      << std::setprecision(3) << outcome.max_rel_error << " (threshold " << gc.threshold << ")\n"
      << std::defaultfloat;
  return outcome;
}

std::uint64_t sweep_seed(std::uint64_t base, std::size_t run) { return base + run; }

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "alpha,r1_iou0.7,r5_iou0.7,seed\n" << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.alpha << ',' << r.r1_iou07 << ',' << r.r5_iou07 << ',' << r.seed << '\n';
  }
  return os.str();
}

std::vector<SweepRow> cmd_sweep_alpha(const ExperimentConfig& cfg,
                                      const std::filesystem::path& train_path,
                                      const std::filesystem::path& cross_path,
                                      const std::filesystem::path& out_csv, std::ostream& log) {
  cfg.validate();
  const auto train_set = load_dataset(train_path);
  const auto cross = load_dataset(cross_path);
  check_dataset_dims(train_set, cfg.model);
  check_dataset_dims(cross, cfg.model);

  EvalConfig ec = cfg.eval;
  ec.top_n = {1, 5};
  ec.thetas = {0.7};
  ec.keep = std::max<std::size_t>(ec.keep, 5);

  std::vector<SweepRow> rows;
  for (const double alpha : cfg.sweep.alphas) {
    for (std::size_t r = 0; r < cfg.sweep.runs; ++r) {
      TrainConfig tc = cfg.train;
      tc.mode = TrainMode::debias;
      tc.alpha = alpha;
      tc.seed = sweep_seed(cfg.train.seed, r);
      const auto result = train(train_set, cfg.model, tc);
      const auto report = evaluate(result.params, cfg.model, cross, EvalMode::full, ec);
      rows.push_back({alpha, report.recall(1, 0.7), report.recall(5, 0.7), tc.seed});
      log << "alpha " << alpha << " seed " << tc.seed << ": R1@0.7 " << rows.back().r1_iou07
          << "  R5@0.7 " << rows.back().r5_iou07 << '\n';
    }
  }
  write_file_atomic(out_csv, sweep_csv(rows));
  return rows;
}

}  // namespace twinloc
