#include <gtest/gtest.h>

#include <sys/wait.h>

#include <bit>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "twinloc/checkpoint.hpp"
#include "twinloc/commands.hpp"
#include "twinloc/config.hpp"
#include "twinloc/dataset_io.hpp"

using namespace twinloc;
namespace fs = std::filesystem;

namespace {

const fs::path kSourceDir = TWINLOC_SOURCE_DIR;
const fs::path kCliPath = TWINLOC_CLI_PATH;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

int run_cli(const std::string& args) {
  const std::string cmd = kCliPath.string() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CommandTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("twinloc_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    cfg_ = load_config(kSourceDir / "configs" / "tiny.ini");
    cfg_.data.dir = dir_ / "data";
  }
  void TearDown() override { fs::remove_all(dir_); }

  void generate_data() {
    std::ostringstream log;
    cmd_generate(cfg_, cfg_.data.dir, log);
  }

  fs::path dir_;
  ExperimentConfig cfg_;
};

}  // namespace

TEST(Config, DefaultsValidateAndShippedConfigMatchesThem) {
  const auto d = ExperimentConfig::defaults();
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.train.adam.lr, 1e-3);
  EXPECT_EQ(d.scenario_train.n_clips, d.model.n_clips);
  const auto shipped = load_config(kSourceDir / "configs" / "default.ini");
  EXPECT_EQ(shipped.to_json(), d.to_json());
}

TEST(Config, OverridesAndLists) {
  const auto c = parse_config(
      "[train]\nmode = tll\nalpha = 2.5\nthreads = 3\n[eval]\nthetas = 0.3, 0.5\n"
      "[model]\ndim = 12\n[sweep]\nalphas = 1,2\n");
  EXPECT_EQ(c.train.mode, TrainMode::tll);
  EXPECT_EQ(c.train.alpha, 2.5);
  EXPECT_EQ(c.train.threads, 3u);
  EXPECT_EQ(c.eval.threads, 3u);
  EXPECT_EQ(c.eval.thetas, (std::vector<double>{0.3, 0.5}));
  EXPECT_EQ(c.scenario_train.dim, 12u);
  EXPECT_EQ(c.scenario_test.dim, 12u);
  EXPECT_EQ(c.sweep.alphas, (std::vector<double>{1.0, 2.0}));
}

TEST(Config, RejectsUnknownKeysSectionsAndBadValues) {
  EXPECT_THROW(parse_config("[train]\nlearning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[optimizer]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nalpha = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nalpha = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nmode = fancy\n"), ConfigError);
  EXPECT_THROW(parse_config("[scenario_train]\nprior_weights = 0.5, 0.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[train\nalpha = 1\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/twinloc.ini"), ConfigError);
}

TEST(DatasetIo, JsonlRoundTripIsExact) {
  const auto cfg = load_config(kSourceDir / "configs" / "tiny.ini");
  const auto ds = generate(cfg.scenario_train, 10);
  std::stringstream ss;
  write_jsonl(ss, ds);
  EXPECT_EQ(read_jsonl(ss), ds);
}

TEST(DatasetIo, MalformedRecordsRaiseFormatErrorWithLine) {
  std::stringstream bad("{\"video\": [[1.0]], \"tokens\": [1], \"gt\": [0.0, 1.0], \"concept\": 0}\nnot json\n");
  try {
    read_jsonl(bad, "x.jsonl");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("x.jsonl:2"), std::string::npos) << e.what();
  }
  std::stringstream inverted("{\"video\": [[1.0]], \"tokens\": [1], \"gt\": [0.8, 0.2], \"concept\": 0}\n");
  EXPECT_THROW(read_jsonl(inverted), FormatError);
}

TEST_F(CommandTest, GenerateWritesCountsAndIsByteIdentical) {
  generate_data();
  const auto& d = cfg_.data;
  EXPECT_EQ(line_count(d.train_path()), 40u);
  EXPECT_EQ(line_count(d.cross_path()), 20u);
  EXPECT_EQ(line_count(d.intest_path()), 20u);
  for (const char* f : {"bias_train.json", "bias_cross_test_concepts.csv", "bias_in_test_intervals.csv",
                        "overlap.json"}) {
    EXPECT_TRUE(fs::exists(d.dir / f)) << f;
  }
  const std::string first = slurp(d.train_path()) + slurp(d.cross_path()) + slurp(d.dir / "overlap.json");
  generate_data();
  EXPECT_EQ(first, slurp(d.train_path()) + slurp(d.cross_path()) + slurp(d.dir / "overlap.json"));
}

TEST_F(CommandTest, TrainIsDeterministicAndCheckpointRoundTripsBitExact) {
  generate_data();
  std::ostringstream log;
  const auto a = cmd_train(cfg_, cfg_.data.train_path(), dir_ / "a.ckpt", log);
  cmd_train(cfg_, cfg_.data.train_path(), dir_ / "b.ckpt", log);
  EXPECT_EQ(slurp(dir_ / "a.ckpt"), slurp(dir_ / "b.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "a.ckpt.log.csv"));
  EXPECT_EQ(line_count(dir_ / "a.ckpt.log.csv"), 1 + cfg_.train.epochs);

  const auto ckpt = load_checkpoint(dir_ / "a.ckpt");
  EXPECT_EQ(ckpt.params, a.params);
  for (std::size_t k = 0; k < a.params.total_size(); ++k) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(ckpt.params.flat(k)), std::bit_cast<std::uint64_t>(a.params.flat(k)));
  }
  EXPECT_EQ(ckpt.metadata["epochs"], cfg_.train.epochs);
  EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(slurp(dir_ / "a.ckpt"))), slurp(dir_ / "a.ckpt"));

  cfg_.train.threads = 3;
  cmd_train(cfg_, cfg_.data.train_path(), dir_ / "c.ckpt", log);
  EXPECT_EQ(slurp(dir_ / "c.ckpt"), slurp(dir_ / "a.ckpt"));
}

TEST_F(CommandTest, CheckpointRejectsVersionMismatchAndTruncation) {
  Checkpoint c;
  c.config = {{"k", 1}};
  c.params.add("w", {2, 2}, {1.0, -0.5, 3.25, 1e-300});
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_EQ(deserialize_checkpoint(bytes), c);
  std::string bumped = bytes;
  bumped.replace(bumped.find(" 1\n"), 3, " 2\n");
  EXPECT_THROW(deserialize_checkpoint(bumped), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_checkpoint("garbage"), FormatError);
}

TEST_F(CommandTest, ZeroEpochsGivesInitialParams) {
  generate_data();
  cfg_.train.epochs = 0;
  std::ostringstream log;
  cmd_train(cfg_, cfg_.data.train_path(), dir_ / "z.ckpt", log);
  EXPECT_EQ(load_checkpoint(dir_ / "z.ckpt").params, init_params(cfg_.model, cfg_.train.seed));
}

TEST_F(CommandTest, TrainRejectsDatasetOfOtherShape) {
  generate_data();
  cfg_.model.dim = 6;
  std::ostringstream log;
  EXPECT_THROW(cmd_train(cfg_, cfg_.data.train_path(), dir_ / "x.ckpt", log), ConfigError);
  EXPECT_FALSE(fs::exists(dir_ / "x.ckpt"));
}

TEST_F(CommandTest, LargeAlphaDebiasMatchesTllLoss) {
  generate_data();
  std::ostringstream log;
  cfg_.train.mode = TrainMode::tll;
  const auto tll = cmd_train(cfg_, cfg_.data.train_path(), dir_ / "t.ckpt", log);
  cfg_.train.mode = TrainMode::debias;
  cfg_.train.alpha = 64.0;
  const auto deb = cmd_train(cfg_, cfg_.data.train_path(), dir_ / "d.ckpt", log);
  const double a = tll.log.back().l_total, b = deb.log.back().l_total;
  EXPECT_LT(std::abs(a - b), 0.02 * a);
}

TEST_F(CommandTest, EvalWritesReportsAndIsDeterministic) {
  generate_data();
  std::ostringstream log;
  cmd_train(cfg_, cfg_.data.train_path(), dir_ / "m.ckpt", log);
  const auto a = cmd_eval(cfg_, dir_ / "m.ckpt", cfg_.data.cross_path(), EvalMode::random, dir_ / "ra", log);
  const auto b = cmd_eval(cfg_, dir_ / "m.ckpt", cfg_.data.cross_path(), EvalMode::random, dir_ / "rb", log);
  EXPECT_EQ(slurp(dir_ / "ra.json"), slurp(dir_ / "rb.json"));
  EXPECT_EQ(slurp(dir_ / "ra.csv"), slurp(dir_ / "rb.csv"));
  EXPECT_EQ(a.metrics.size(), 4u);
  const auto full = cmd_eval(cfg_, dir_ / "m.ckpt", cfg_.data.cross_path(), EvalMode::full, dir_ / "f", log);
  const auto video = cmd_eval(cfg_, dir_ / "m.ckpt", cfg_.data.cross_path(), EvalMode::video_only, dir_ / "v", log);
  EXPECT_EQ(full.n_queries, video.n_queries);
  EXPECT_EQ(full.to_json()["metrics"].size(), video.to_json()["metrics"].size());
  EXPECT_EQ(b.to_json(), a.to_json());
}

TEST_F(CommandTest, AnalyzeReportsOverlap) {
  generate_data();
  std::ostringstream log;
  const auto r = cmd_analyze(cfg_, cfg_.data.train_path(), cfg_.data.train_path(), dir_ / "an", log);
  EXPECT_DOUBLE_EQ(*r.overlap, 1.0);
  EXPECT_TRUE(fs::exists(dir_ / "an.json"));
  EXPECT_TRUE(fs::exists(dir_ / "an_concepts.csv"));
}

TEST(GradCheck, ShippedConfigPassesAndInjectedFaultFails) {
  const auto cfg = ExperimentConfig::defaults();
  std::ostringstream log;
  const auto ok = cmd_gradcheck(cfg, false, log);
  EXPECT_TRUE(ok.passed);
  EXPECT_LT(ok.max_rel_error, 1e-4);
  EXPECT_EQ(ok.cases.size(), 3u);
  EXPECT_NE(log.str().find(param::kFusionWeight), std::string::npos);
  EXPECT_NE(log.str().find("PASS"), std::string::npos);
  std::ostringstream bad_log;
  const auto bad = cmd_gradcheck(cfg, true, bad_log);
  EXPECT_FALSE(bad.passed);
  EXPECT_NE(bad_log.str().find("FAIL"), std::string::npos);
}

TEST_F(CommandTest, SweepSingleAlphaMatchesStandaloneRun) {
  generate_data();
  cfg_.sweep.alphas = {1.0};
  cfg_.sweep.runs = 1;
  std::ostringstream log;
  const auto rows = cmd_sweep_alpha(cfg_, cfg_.data.train_path(), cfg_.data.cross_path(), dir_ / "sweep.csv", log);
  ASSERT_EQ(rows.size(), 1u);
  const std::string csv = slurp(dir_ / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,r1_iou0.7,r5_iou0.7,seed");
  EXPECT_EQ(line_count(dir_ / "sweep.csv"), 2u);

  cfg_.train.mode = TrainMode::debias;
  cfg_.train.alpha = 1.0;
  cfg_.train.seed = sweep_seed(cfg_.train.seed, 0);
  cmd_train(cfg_, cfg_.data.train_path(), dir_ / "s.ckpt", log);
  const auto r = cmd_eval(cfg_, dir_ / "s.ckpt", cfg_.data.cross_path(), EvalMode::full, dir_ / "s", log);
  EXPECT_EQ(rows[0].seed, cfg_.train.seed);
  EXPECT_EQ(rows[0].r1_iou07, r.recall(1, 0.7));
  EXPECT_EQ(rows[0].r5_iou07, r.recall(5, 0.7));
}

TEST_F(CommandTest, BinaryExitCodes) {
  const fs::path cfg = kSourceDir / "configs" / "tiny.ini";
  const std::string data = (dir_ / "data").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("bogus-command"), 2);

  fs::path bad = dir_ / "bad.ini";
  std::ofstream(bad) << "[train]\nunknown_key = 1\n";
  EXPECT_EQ(run_cli("generate --config " + bad.string() + " --out " + (dir_ / "nogen").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "nogen"));

  EXPECT_EQ(run_cli("generate --config " + cfg.string() + " --out " + data), 0);
  const std::string ckpt = (dir_ / "m.ckpt").string();
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --data " + data + "/train.jsonl --out " + ckpt +
                    " --mode tll"),
            0);
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --checkpoint " + ckpt + " --data " + data +
                    "/cross_test.jsonl --mode video_only --out " + (dir_ / "ev").string()),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "ev.json"));

  std::string bytes = slurp(ckpt);
  bytes.replace(bytes.find(" 1\n"), 3, " 9\n");
  std::ofstream(dir_ / "old.ckpt", std::ios::binary) << bytes;
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --checkpoint " + (dir_ / "old.ckpt").string() +
                    " --data " + data + "/cross_test.jsonl --out " + (dir_ / "ev2").string()),
            3);

  const fs::path other = kSourceDir / "configs" / "default.ini";
  EXPECT_EQ(run_cli("train --config " + other.string() + " --data " + data + "/train.jsonl --out " +
                    (dir_ / "x.ckpt").string()),
            2);
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --checkpoint " + ckpt + " --data " + data +
                    "/cross_test.jsonl --mode nonsense --out " + (dir_ / "ev3").string()),
            2);
  EXPECT_EQ(run_cli("gradcheck"), 0);
  EXPECT_NE(run_cli("gradcheck --inject-fault"), 0);
}
