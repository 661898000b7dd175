#include "twinloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "twinloc/localizers.hpp"
#include "twinloc/parallel.hpp"
#include "twinloc/rng.hpp"

namespace twinloc {

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::full: return "full";
    case EvalMode::video_only: return "video_only";
    case EvalMode::query_masked: return "query_masked";
    case EvalMode::random: return "random";
  }
  return "unknown";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "full") return EvalMode::full;
  if (s == "video_only") return EvalMode::video_only;
  if (s == "query_masked") return EvalMode::query_masked;
  if (s == "random") return EvalMode::random;
  throw ContractViolation("unknown evaluation mode '" + s +
                          "' (expected full, video_only, query_masked or random)");
}

std::vector<ScoredInterval> temporal_nms(std::span<const ScoredInterval> candidates,
                                         double thresh, std::size_t keep) {
  if (!(thresh > 0.0 && thresh <= 1.0)) {
    throw ContractViolation("temporal_nms: threshold must lie in (0, 1]");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = candidates[x];
    const auto& b = candidates[y];
    if (a.score != b.score) return a.score > b.score;
    return a.interval.start < b.interval.start;
  });

  std::vector<ScoredInterval> kept;
  kept.reserve(std::min(keep, candidates.size()));
  for (const std::size_t i : order) {
    if (kept.size() >= keep) break;
    const auto& c = candidates[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredInterval& k) {
      return temporal_iou(k.interval, c.interval) > thresh;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

bool recall_hit(std::span<const ScoredInterval> preds, const TemporalInterval& gt, double theta) {
  return std::any_of(preds.begin(), preds.end(), [&](const ScoredInterval& p) {
    return temporal_iou(p.interval, gt) >= theta;
  });
}

void EvalConfig::validate() const {
  if (!(nms_threshold > 0.0 && nms_threshold <= 1.0)) {
    throw ContractViolation("eval: nms_threshold must lie in (0, 1]");
  }
  if (keep == 0) throw ContractViolation("eval: keep must be >= 1");
  if (top_n.empty() || thetas.empty()) throw ContractViolation("eval: empty metric grid");
  for (const auto n : top_n) {
    if (n == 0 || n > keep) throw ContractViolation("eval: every top_n must lie in [1, keep]");
  }
  for (const auto t : thetas) {
    if (!(t > 0.0 && t <= 1.0)) throw ContractViolation("eval: thetas must lie in (0, 1]");
  }
  if (threads == 0) throw ContractViolation("eval: threads must be >= 1");
}

double EvalReport::recall(std::size_t top_n, double theta) const {
  for (const auto& m : metrics) {
    if (m.top_n == top_n && m.theta == theta) return m.recall;
  }
  throw ContractViolation("EvalReport: no metric for R@" + std::to_string(top_n) + ", IoU=" +
                          std::to_string(theta));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["n_queries"] = n_queries;
  j["seed"] = seed;
  auto& arr = j["metrics"] = nlohmann::json::array();
  for (const auto& m : metrics) {
    arr.push_back({{"top_n", m.top_n}, {"theta", m.theta}, {"recall", m.recall}});
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.mode = eval_mode_from_string(j.at("mode").get<std::string>());
  r.n_queries = j.at("n_queries").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& m : j.at("metrics")) {
    r.metrics.push_back({m.at("top_n").get<std::size_t>(), m.at("theta").get<double>(),
                         m.at("recall").get<double>()});
  }
  return r;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "mode,top_n,theta,recall,n_queries,seed\n";
  os << std::setprecision(17);
  for (const auto& m : metrics) {
    os << to_string(mode) << ',' << m.top_n << ',' << m.theta << ',' << m.recall << ','
       << n_queries << ',' << seed << '\n';
  }
  return os.str();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "mode: " << to_string(mode) << "  queries: " << n_queries << "\n";
  os << std::left << std::setw(8) << "";
  std::vector<double> thetas;
  std::vector<std::size_t> ns;
  for (const auto& m : metrics) {
    if (std::find(thetas.begin(), thetas.end(), m.theta) == thetas.end()) thetas.push_back(m.theta);
    if (std::find(ns.begin(), ns.end(), m.top_n) == ns.end()) ns.push_back(m.top_n);
  }
  for (const double t : thetas) {
    std::ostringstream h;
    h << "IoU=" << t;
    os << std::setw(10) << h.str();
  }
  os << "\n";
  for (const auto n : ns) {
    os << std::setw(8) << ("R@" + std::to_string(n));
    for (const double t : thetas) {
      std::ostringstream v;
      v << std::fixed << std::setprecision(2) << recall(n, t);
      os << std::setw(10) << v.str();
    }
    os << "\n";
  }
  return os.str();
}

std::vector<ScoredInterval> candidates_from_map(const ScoreMap& map) {
  std::vector<ScoredInterval> out;
  out.reserve(map.scores.size());
  for (std::size_t i = 0; i < map.scores.size(); ++i) {
    out.push_back({interval_of(map.grid.cell(i), map.grid.n_clips()), map.scores[i]});
  }
  return out;
}

EvalReport evaluate_score_maps(std::span<const ScoreMap> maps,
                               std::span<const TemporalInterval> gts, EvalMode mode,
                               const EvalConfig& cfg) {
  cfg.validate();
  if (maps.size() != gts.size()) {
    throw ContractViolation("evaluate: score map count does not match annotation count");
  }
  const std::size_t cells = cfg.top_n.size() * cfg.thetas.size();
  std::vector<std::vector<unsigned char>> hits(maps.size(), std::vector<unsigned char>(cells));
  parallel_for(maps.size(), cfg.threads, [&](std::size_t q) {
    const auto kept = temporal_nms(candidates_from_map(maps[q]), cfg.nms_threshold, cfg.keep);
    std::size_t k = 0;
    for (const auto n : cfg.top_n) {
      const std::span<const ScoredInterval> top(kept.data(), std::min(n, kept.size()));
      for (const double theta : cfg.thetas) hits[q][k++] = recall_hit(top, gts[q], theta) ? 1 : 0;
    }
  });

  EvalReport report;
  report.mode = mode;
  report.n_queries = maps.size();
  report.seed = cfg.seed;
  std::size_t k = 0;
  for (const auto n : cfg.top_n) {
    for (const double theta : cfg.thetas) {
      std::size_t count = 0;
      for (const auto& h : hits) count += h[k];
      const double pct =
          maps.empty() ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(maps.size());
      report.metrics.push_back({n, theta, pct});
      ++k;
    }
  }
  return report;
}

ScoreMap score_sample(const ParamStore& params, const ModelConfig& model,
                      const GroundingSample& sample, EvalMode mode, std::uint64_t seed,
                      std::size_t index) {
  if (sample.video.n_clips() != model.n_clips || sample.video.dim() != model.dim) {
    throw ContractViolation("evaluate: sample shape does not match the model");
  }
  const ProposalGrid grid = model.grid();
  if (mode == EvalMode::random) {
    std::mt19937_64 rng(derive_seed(seed, index));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScoreMap m{grid, std::vector<double>(grid.cell_count())};
    for (auto& s : m.scores) s = u(rng);
    return m;
  }
  const auto feats = encode_proposals(sample.video, model.bm_samples, params);
  switch (mode) {
    case EvalMode::video_only:
      return visual_score_map(feats, params);
    case EvalMode::query_masked:
      return vs_score_map(feats, encode_query(mask_query(sample.query), params), params);
    default:
      return vs_score_map(feats, encode_query(sample.query, params), params);
  }
}

EvalReport evaluate(const ParamStore& params, const ModelConfig& model,
                    const std::vector<GroundingSample>& dataset, EvalMode mode,
                    const EvalConfig& cfg) {
  cfg.validate();
  if (mode != EvalMode::random) check_param_layout(params, model);
  std::vector<ScoreMap> maps(dataset.size());
  std::vector<TemporalInterval> gts(dataset.size());
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    maps[i] = score_sample(params, model, dataset[i], mode, cfg.seed, i);
    gts[i] = dataset[i].gt;
  });
  return evaluate_score_maps(maps, gts, mode, cfg);
}

}  // namespace twinloc
