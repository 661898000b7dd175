#include "twinloc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace twinloc {

namespace {

ScenarioSpec shipped_train_scenario() {
  ScenarioSpec s;
  s.n_concepts = 20;
  s.zipf_exponent = 1.0;
  s.bias_strength = 0.9;
  s.noise_sigma = 0.5;
  s.seed = 1;
  s.signature_seed = 7;
  s.query_distractors = 2;
  s.distractor_events = 1;
  s.interval_prior = {
      {0.25, 0.20, 0.30, 0.05},
      {0.25, 0.65, 0.25, 0.05},
      {0.25, 0.45, 0.50, 0.05},
      {0.25, 0.85, 0.20, 0.05},
  };
  // Frequent concepts sit on components 0 and 1; the six rarest on 2 and 3.
  s.concept_interval_map.resize(s.n_concepts);
  for (std::size_t c = 0; c < s.n_concepts; ++c) {
    s.concept_interval_map[c] = (c >= 14 ? 2 : 0) + c % 2;
  }
  return s;
}

ScenarioSpec shipped_test_scenario() {
  ScenarioSpec s = shipped_train_scenario();
  s.seed = 2;
  s.bias_strength = 0.5;
  for (auto& k : s.concept_interval_map) k = (k + 2) % 4;
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(to_size(key, item));
  return out;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;
using Section = std::map<std::string, Setter>;

// Prior components are given column-wise; they are assembled after parsing.
struct PriorColumns {
  std::vector<double> weights, centers, widths, jitters;
  bool touched = false;
};

Section scenario_section(ScenarioSpec& s, PriorColumns& cols) {
  return {
      {"n_concepts", [&](auto& k, auto& v) { s.n_concepts = to_size(k, v); }},
      {"zipf_exponent", [&](auto& k, auto& v) { s.zipf_exponent = to_double(k, v); }},
      {"bias_strength", [&](auto& k, auto& v) { s.bias_strength = to_double(k, v); }},
      {"noise_sigma", [&](auto& k, auto& v) { s.noise_sigma = to_double(k, v); }},
      {"seed", [&](auto& k, auto& v) { s.seed = to_u64(k, v); }},
      {"signature_seed", [&](auto& k, auto& v) { s.signature_seed = to_u64(k, v); }},
      {"query_distractors", [&](auto& k, auto& v) { s.query_distractors = to_size(k, v); }},
      {"distractor_events", [&](auto& k, auto& v) { s.distractor_events = to_size(k, v); }},
      {"concept_map", [&](auto& k, auto& v) { s.concept_interval_map = to_sizes(k, v); }},
      {"prior_weights", [&](auto& k, auto& v) { cols.weights = to_doubles(k, v); cols.touched = true; }},
      {"prior_centers", [&](auto& k, auto& v) { cols.centers = to_doubles(k, v); cols.touched = true; }},
      {"prior_widths", [&](auto& k, auto& v) { cols.widths = to_doubles(k, v); cols.touched = true; }},
      {"prior_jitters", [&](auto& k, auto& v) { cols.jitters = to_doubles(k, v); cols.touched = true; }},
  };
}

void apply_prior(const std::string& section, ScenarioSpec& s, PriorColumns cols) {
  if (!cols.touched) return;
  // Columns that were not given keep their current values.
  const auto current = s.interval_prior;
  auto fill = [&](std::vector<double>& col, double IntervalComponent::*field) {
    if (!col.empty()) return;
    for (const auto& c : current) col.push_back(c.*field);
  };
  fill(cols.weights, &IntervalComponent::weight);
  fill(cols.centers, &IntervalComponent::center);
  fill(cols.widths, &IntervalComponent::width);
  fill(cols.jitters, &IntervalComponent::jitter);
  const auto n = cols.weights.size();
  if (cols.centers.size() != n || cols.widths.size() != n || cols.jitters.size() != n) {
    throw ConfigError(section + ": prior_weights, prior_centers, prior_widths and prior_jitters "
                      "must have the same length");
  }
  s.interval_prior.clear();
  for (std::size_t i = 0; i < n; ++i) {
    s.interval_prior.push_back({cols.weights[i], cols.centers[i], cols.widths[i], cols.jitters[i]});
  }
}

nlohmann::json scenario_json(const ScenarioSpec& s) {
  nlohmann::json prior = nlohmann::json::array();
  for (const auto& c : s.interval_prior) {
    prior.push_back({{"weight", c.weight}, {"center", c.center}, {"width", c.width}, {"jitter", c.jitter}});
  }
  return {{"n_concepts", s.n_concepts},
          {"zipf_exponent", s.zipf_exponent},
          {"interval_prior", prior},
          {"bias_strength", s.bias_strength},
          {"concept_map", s.concept_interval_map},
          {"noise_sigma", s.noise_sigma},
          {"n_clips", s.n_clips},
          {"dim", s.dim},
          {"vocab_size", s.vocab_size},
          {"seed", s.seed},
          {"signature_seed", s.signature_seed},
          {"query_distractors", s.query_distractors},
          {"distractor_events", s.distractor_events}};
}

void sync_scenario_dims(ExperimentConfig& c) {
  for (ScenarioSpec* s : {&c.scenario_train, &c.scenario_test}) {
    s->n_clips = c.model.n_clips;
    s->dim = c.model.dim;
    s->vocab_size = c.model.vocab_size;
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.train.adam.lr = 1e-3;
  c.train.batch_size = 4;
  c.train.epochs = 20;
  c.scenario_train = shipped_train_scenario();
  c.scenario_test = shipped_test_scenario();
  sync_scenario_dims(c);
  return c;
}

void ExperimentConfig::validate() const {
  try {
    model.validate();
    train.validate();
    eval.validate();
    scenario_train.validate();
    scenario_test.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (scenario_train.n_concepts != scenario_test.n_concepts ||
      scenario_train.signature_seed != scenario_test.signature_seed) {
    throw ConfigError("scenario_train and scenario_test must share n_concepts and signature_seed");
  }
  if (data.n_train == 0 || data.n_cross == 0 || data.n_intest == 0) {
    throw ConfigError("data: sample counts must be >= 1");
  }
  if (data.report_grid < 2) throw ConfigError("data: report_grid must be >= 2");
  if (sweep.alphas.empty()) throw ConfigError("sweep: alphas must not be empty");
  for (const double a : sweep.alphas) {
    if (!(a > 0.0)) throw ConfigError("sweep: every alpha must be > 0");
  }
  if (sweep.runs == 0) throw ConfigError("sweep: runs must be >= 1");
  if (gradcheck.n_clips == 0 || gradcheck.dim == 0 || gradcheck.vocab_size < 2 ||
      gradcheck.bm_samples == 0) {
    throw ConfigError("gradcheck: n_clips, dim, bm_samples must be >= 1 and vocab_size >= 2");
  }
  if (!(gradcheck.threshold > 0.0)) throw ConfigError("gradcheck: threshold must be > 0");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"model",
       {{"n_clips", model.n_clips},
        {"dim", model.dim},
        {"vocab_size", model.vocab_size},
        {"bm_samples", model.bm_samples},
        {"cell_prior", model.cell_prior}}},
      {"train",
       {{"mode", to_string(train.mode)},
        {"alpha", train.alpha},
        {"lr", train.adam.lr},
        {"beta1", train.adam.beta1},
        {"beta2", train.adam.beta2},
        {"eps", train.adam.eps},
        {"batch_size", train.batch_size},
        {"epochs", train.epochs},
        {"seed", train.seed},
        {"detach_bias_weight", train.detach_bias_weight},
        {"stop_encoder_grad_from_visual", train.stop_encoder_grad_from_visual},
        {"reduction", train.reduction == Reduction::mean ? "mean" : "sum"},
        {"threads", train.threads}}},
      {"labels", {{"mu_min", train.labels.mu_min}, {"mu_max", train.labels.mu_max}}},
      {"eval",
       {{"nms_threshold", eval.nms_threshold},
        {"keep", eval.keep},
        {"top_n", eval.top_n},
        {"thetas", eval.thetas},
        {"seed", eval.seed}}},
      {"scenario_train", scenario_json(scenario_train)},
      {"scenario_test", scenario_json(scenario_test)},
      {"data",
       {{"dir", data.dir.string()},
        {"n_train", data.n_train},
        {"n_cross", data.n_cross},
        {"n_intest", data.n_intest},
        {"report_grid", data.report_grid},
        {"top_k", data.top_k}}},
      {"sweep", {{"alphas", sweep.alphas}, {"runs", sweep.runs}}},
      {"gradcheck",
       {{"n_clips", gradcheck.n_clips},
        {"dim", gradcheck.dim},
        {"vocab_size", gradcheck.vocab_size},
        {"bm_samples", gradcheck.bm_samples},
        {"seed", gradcheck.seed},
        {"threshold", gradcheck.threshold}}},
  };
}

// ini_parser only knows whole-line comments; drop trailing "# ..." too.
static std::string strip_inline_comments(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    out << line << '\n';
  }
  return out.str();
}

ExperimentConfig parse_config(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(strip_inline_comments(ini_text));
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  ExperimentConfig c = ExperimentConfig::defaults();
  PriorColumns train_cols, test_cols;
  const std::map<std::string, Section> schema = {
      {"model",
       {{"n_clips", [&](auto& k, auto& v) { c.model.n_clips = to_size(k, v); }},
        {"dim", [&](auto& k, auto& v) { c.model.dim = to_size(k, v); }},
        {"vocab_size", [&](auto& k, auto& v) { c.model.vocab_size = to_size(k, v); }},
        {"bm_samples", [&](auto& k, auto& v) { c.model.bm_samples = to_size(k, v); }},
        {"cell_prior", [&](auto& k, auto& v) { c.model.cell_prior = to_bool(k, v); }}}},
      {"train",
       {{"mode",
         [&](auto& k, auto& v) {
           try {
             c.train.mode = train_mode_from_string(v);
           } catch (const ContractViolation& e) {
             throw ConfigError(k + ": " + e.what());
           }
         }},
        {"alpha", [&](auto& k, auto& v) { c.train.alpha = to_double(k, v); }},
        {"lr", [&](auto& k, auto& v) { c.train.adam.lr = to_double(k, v); }},
        {"beta1", [&](auto& k, auto& v) { c.train.adam.beta1 = to_double(k, v); }},
        {"beta2", [&](auto& k, auto& v) { c.train.adam.beta2 = to_double(k, v); }},
        {"eps", [&](auto& k, auto& v) { c.train.adam.eps = to_double(k, v); }},
        {"batch_size", [&](auto& k, auto& v) { c.train.batch_size = to_size(k, v); }},
        {"epochs", [&](auto& k, auto& v) { c.train.epochs = to_size(k, v); }},
        {"seed", [&](auto& k, auto& v) { c.train.seed = to_u64(k, v); }},
        {"detach_bias_weight", [&](auto& k, auto& v) { c.train.detach_bias_weight = to_bool(k, v); }},
        {"stop_encoder_grad_from_visual",
         [&](auto& k, auto& v) { c.train.stop_encoder_grad_from_visual = to_bool(k, v); }},
        {"reduction",
         [&](auto& k, auto& v) {
           if (v == "mean") {
             c.train.reduction = Reduction::mean;
           } else if (v == "sum") {
             c.train.reduction = Reduction::sum;
           } else {
             throw ConfigError(k + ": expected mean or sum, got '" + v + "'");
           }
         }},
        {"threads", [&](auto& k, auto& v) { c.train.threads = c.eval.threads = to_size(k, v); }}}},
      {"labels",
       {{"mu_min", [&](auto& k, auto& v) { c.train.labels.mu_min = to_double(k, v); }},
        {"mu_max", [&](auto& k, auto& v) { c.train.labels.mu_max = to_double(k, v); }}}},
      {"eval",
       {{"nms_threshold", [&](auto& k, auto& v) { c.eval.nms_threshold = to_double(k, v); }},
        {"keep", [&](auto& k, auto& v) { c.eval.keep = to_size(k, v); }},
        {"top_n", [&](auto& k, auto& v) { c.eval.top_n = to_sizes(k, v); }},
        {"thetas", [&](auto& k, auto& v) { c.eval.thetas = to_doubles(k, v); }},
        {"seed", [&](auto& k, auto& v) { c.eval.seed = to_u64(k, v); }}}},
      {"scenario_train", scenario_section(c.scenario_train, train_cols)},
      {"scenario_test", scenario_section(c.scenario_test, test_cols)},
      {"data",
       {{"dir", [&](auto&, auto& v) { c.data.dir = v; }},
        {"n_train", [&](auto& k, auto& v) { c.data.n_train = to_size(k, v); }},
        {"n_cross", [&](auto& k, auto& v) { c.data.n_cross = to_size(k, v); }},
        {"n_intest", [&](auto& k, auto& v) { c.data.n_intest = to_size(k, v); }},
        {"report_grid", [&](auto& k, auto& v) { c.data.report_grid = to_size(k, v); }},
        {"top_k", [&](auto& k, auto& v) { c.data.top_k = to_size(k, v); }}}},
      {"sweep",
       {{"alphas", [&](auto& k, auto& v) { c.sweep.alphas = to_doubles(k, v); }},
        {"runs", [&](auto& k, auto& v) { c.sweep.runs = to_size(k, v); }}}},
      {"gradcheck",
       {{"n_clips", [&](auto& k, auto& v) { c.gradcheck.n_clips = to_size(k, v); }},
        {"dim", [&](auto& k, auto& v) { c.gradcheck.dim = to_size(k, v); }},
        {"vocab_size", [&](auto& k, auto& v) { c.gradcheck.vocab_size = to_size(k, v); }},
        {"bm_samples", [&](auto& k, auto& v) { c.gradcheck.bm_samples = to_size(k, v); }},
        {"seed", [&](auto& k, auto& v) { c.gradcheck.seed = to_u64(k, v); }},
        {"threshold", [&](auto& k, auto& v) { c.gradcheck.threshold = to_double(k, v); }}}},
  };

  for (const auto& [section, body] : tree) {
    const auto it = schema.find(section);
    if (it == schema.end()) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const auto setter = it->second.find(key);
      if (setter == it->second.end()) {
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      }
      setter->second(section + "." + key, trim(node.get_value<std::string>()));
    }
  }
  apply_prior("scenario_train", c.scenario_train, train_cols);
  apply_prior("scenario_test", c.scenario_test, test_cols);
  sync_scenario_dims(c);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace twinloc
