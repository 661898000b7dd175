#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinloc/encoders.hpp"
#include "twinloc/grounding_sample.hpp"
#include "twinloc/proposal_map.hpp"

namespace twinloc {

/// full: visual-semantic head. video_only: visual head. query_masked:
/// visual-semantic head with every query replaced by the null token.
/// random: seeded uniform scores.
enum class EvalMode { full, video_only, query_masked, random };

std::string to_string(EvalMode mode);
EvalMode eval_mode_from_string(const std::string& s);

struct ScoredInterval {
  TemporalInterval interval;
  double score = 0.0;

  friend bool operator==(const ScoredInterval&, const ScoredInterval&) = default;
};

/// Greedy temporal NMS. Candidates are visited by descending score (ties:
/// earlier start, then input order); a candidate survives unless its IoU
/// with an earlier survivor exceeds `thresh`. Stops after `keep` survivors.
std::vector<ScoredInterval> temporal_nms(std::span<const ScoredInterval> candidates,
                                         double thresh, std::size_t keep);

/// 1 iff some prediction reaches IoU >= theta with gt.
bool recall_hit(std::span<const ScoredInterval> preds, const TemporalInterval& gt, double theta);

struct EvalConfig {
  double nms_threshold = 0.4;
  std::size_t keep = 5;
  std::vector<std::size_t> top_n{1, 5};
  std::vector<double> thetas{0.5, 0.7};
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct MetricCell {
  std::size_t top_n = 1;
  double theta = 0.5;
  double recall = 0.0;  // percentage
};

struct EvalReport {
  EvalMode mode = EvalMode::full;
  std::vector<MetricCell> metrics;
  std::size_t n_queries = 0;
  std::uint64_t seed = 0;

  /// Percentage for (top_n, theta); throws if that cell was not evaluated.
  double recall(std::size_t top_n, double theta) const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Header "mode,top_n,theta,recall,n_queries,seed" plus one row per metric.
  std::string to_csv() const;
  /// Human-readable R@{N}×IoU@{θ} table.
  std::string to_table() const;
};

/// Hit counts shared by every evaluation mode: score maps in, report out.
EvalReport evaluate_score_maps(std::span<const ScoreMap> maps,
                               std::span<const TemporalInterval> gts, EvalMode mode,
                               const EvalConfig& cfg);

/// Candidate list for every cell of a score map, in grid order.
std::vector<ScoredInterval> candidates_from_map(const ScoreMap& map);

/// Score map the given mode produces for one sample.
ScoreMap score_sample(const ParamStore& params, const ModelConfig& model,
                      const GroundingSample& sample, EvalMode mode, std::uint64_t seed,
                      std::size_t index);

EvalReport evaluate(const ParamStore& params, const ModelConfig& model,
                    const std::vector<GroundingSample>& dataset, EvalMode mode,
                    const EvalConfig& cfg);

}  // namespace twinloc
