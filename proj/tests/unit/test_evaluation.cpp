#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "twinloc/evaluation.hpp"
#include "twinloc/synthbench.hpp"

using namespace twinloc;

namespace {

ScoredInterval si(double s, double e, double score) { return {TemporalInterval::make(s, e), score}; }

// Quadratic reference: pick the best remaining candidate, drop its overlaps, repeat.
std::vector<ScoredInterval> reference_nms(std::vector<ScoredInterval> c, double thresh, std::size_t keep) {
  std::vector<std::size_t> alive(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) alive[i] = i;
  std::vector<ScoredInterval> out;
  while (!alive.empty() && out.size() < keep) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < alive.size(); ++k) {
      const auto& a = c[alive[k]];
      const auto& b = c[alive[best]];
      if (a.score > b.score || (a.score == b.score && a.interval.start < b.interval.start)) best = k;
    }
    const ScoredInterval chosen = c[alive[best]];
    out.push_back(chosen);
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < alive.size(); ++k) {
      if (k == best) continue;
      if (temporal_iou(c[alive[k]].interval, chosen.interval) <= thresh) next.push_back(alive[k]);
    }
    alive = std::move(next);
  }
  return out;
}

ScenarioSpec eval_scenario() {
  ScenarioSpec s;
  s.n_concepts = 6;
  s.n_clips = 8;
  s.dim = 8;
  s.vocab_size = 12;
  s.interval_prior = {{0.5, 0.25, 0.3, 0.05}, {0.5, 0.7, 0.3, 0.05}};
  s.concept_interval_map = {0, 1, 0, 1, 0, 1};
  return s;
}

ModelConfig eval_model() {
  ModelConfig m;
  m.n_clips = 8;
  m.dim = 8;
  m.vocab_size = 12;
  m.bm_samples = 4;
  return m;
}

}  // namespace

TEST(TemporalNms, DisjointCandidatesKeepTopByScore) {
  const std::vector<ScoredInterval> c{si(0.0, 0.1, 0.3), si(0.2, 0.3, 0.9), si(0.4, 0.5, 0.5),
                                      si(0.6, 0.7, 0.7), si(0.8, 0.9, 0.1)};
  const auto out = temporal_nms(c, 0.4, 3);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], c[1]);
  EXPECT_EQ(out[1], c[3]);
  EXPECT_EQ(out[2], c[2]);
}

TEST(TemporalNms, IdenticalIntervalsKeepHigherScore) {
  const std::vector<ScoredInterval> c{si(0.2, 0.6, 0.4), si(0.2, 0.6, 0.8)};
  const auto out = temporal_nms(c, 0.4, 5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.8);
}

TEST(TemporalNms, TiesBreakByEarlierStart) {
  const std::vector<ScoredInterval> c{si(0.5, 0.7, 0.6), si(0.1, 0.3, 0.6)};
  const auto out = temporal_nms(c, 0.4, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].interval.start, 0.1);
}

TEST(TemporalNms, MatchesQuadraticReferenceAndKeepsSurvivorsApart) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredInterval> c;
    for (int i = 0; i < 20; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      if (b - a < 1e-3) b = std::min(1.0, a + 0.05);
      c.push_back(si(a, b, std::floor(u(rng) * 8.0) / 8.0));
    }
    const double thresh = trial % 2 == 0 ? 0.4 : 0.7;
    const auto out = temporal_nms(c, thresh, 5);
    EXPECT_EQ(out, reference_nms(c, thresh, 5));
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j)
        EXPECT_LE(temporal_iou(out[i].interval, out[j].interval), thresh);
  }
}

TEST(TemporalNms, RejectsBadThreshold) {
  const std::vector<ScoredInterval> c{si(0.0, 0.5, 1.0)};
  EXPECT_THROW(temporal_nms(c, 0.0, 1), ContractViolation);
  EXPECT_THROW(temporal_nms(c, 1.5, 1), ContractViolation);
}

TEST(RecallHit, ExactAndDisjoint) {
  const auto gt = TemporalInterval::make(0.25, 0.5);
  const std::vector<ScoredInterval> exact{si(0.25, 0.5, 1.0)};
  const std::vector<ScoredInterval> disjoint{si(0.0, 0.2, 1.0), si(0.6, 0.9, 0.5)};
  EXPECT_TRUE(recall_hit(exact, gt, 0.7));
  EXPECT_FALSE(recall_hit(disjoint, gt, 0.5));
  // IoU exactly 0.5 counts as a hit.
  const std::vector<ScoredInterval> half{si(0.25, 0.75, 1.0)};
  EXPECT_TRUE(recall_hit(half, gt, 0.5));
  EXPECT_FALSE(recall_hit(half, gt, 0.7));
}

TEST(EvaluateScoreMaps, AggregateMatchesBruteForce) {
  const ProposalGrid g(6);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoreMap> maps;
  std::vector<TemporalInterval> gts;
  for (int q = 0; q < 100; ++q) {
    std::vector<double> s(g.cell_count());
    for (auto& v : s) v = u(rng);
    maps.push_back({g, s});
    gts.push_back(interval_of(g.cell(static_cast<std::size_t>(u(rng) * g.cell_count())), 6));
  }
  const EvalConfig cfg;
  const auto report = evaluate_score_maps(maps, gts, EvalMode::full, cfg);
  EXPECT_EQ(report.n_queries, 100u);
  for (const std::size_t n : {1u, 5u}) {
    for (const double theta : {0.5, 0.7}) {
      int hits = 0;
      for (std::size_t q = 0; q < maps.size(); ++q) {
        const auto kept = reference_nms(candidates_from_map(maps[q]), 0.4, 5);
        const std::size_t take = std::min<std::size_t>(n, kept.size());
        bool hit = false;
        for (std::size_t k = 0; k < take; ++k) hit = hit || temporal_iou(kept[k].interval, gts[q]) >= theta;
        hits += hit ? 1 : 0;
      }
      EXPECT_DOUBLE_EQ(report.recall(n, theta), hits);
    }
  }
  EXPECT_GE(report.recall(5, 0.5), report.recall(1, 0.5));
  EXPECT_GE(report.recall(1, 0.5), report.recall(1, 0.7));
  EXPECT_THROW(report.recall(10, 0.5), ContractViolation);
}

TEST(EvaluateScoreMaps, PerfectOracleScoresHundred) {
  const auto ds = generate(eval_scenario(), 50);
  const ProposalGrid g(8);
  std::vector<ScoreMap> maps;
  std::vector<TemporalInterval> gts;
  for (const auto& s : ds) {
    std::vector<double> scores(g.cell_count(), 0.0);
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
      if (temporal_iou(interval_of(g.cell(c), 8), s.gt) > 1.0 - 1e-12) scores[c] = 1.0;
    }
    maps.push_back({g, scores});
    gts.push_back(s.gt);
  }
  const auto r = evaluate_score_maps(maps, gts, EvalMode::full, EvalConfig{});
  EXPECT_EQ(r.recall(1, 0.5), 100.0);
  EXPECT_EQ(r.recall(1, 0.7), 100.0);
}

TEST(Evaluate, RandomModeMatchesGeometryExpectation) {
  auto spec = eval_scenario();
  const auto ds = generate(spec, 3000);
  const auto model = eval_model();
  EvalConfig cfg;
  cfg.seed = 11;
  const auto r = evaluate(init_params(model, 1), model, ds, EvalMode::random, cfg);

  // Under i.i.d. uniform scores the top-1 survivor is a uniformly random cell.
  const ProposalGrid g(8);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pick_sample(0, ds.size() - 1), pick_cell(0, g.cell_count() - 1);
  const int draws = 200000;
  int hits = 0;
  for (int i = 0; i < draws; ++i) {
    const auto& gt = ds[pick_sample(rng)].gt;
    hits += temporal_iou(interval_of(g.cell(pick_cell(rng)), 8), gt) >= 0.5 ? 1 : 0;
  }
  const double expected = 100.0 * hits / draws;
  EXPECT_NEAR(r.recall(1, 0.5), expected, 3.0);
}

TEST(Evaluate, DeterministicAndMonotone) {
  const auto ds = generate(eval_scenario(), 40);
  const auto model = eval_model();
  const auto params = init_params(model, 3);
  EvalConfig cfg;
  for (const auto mode : {EvalMode::full, EvalMode::video_only, EvalMode::query_masked, EvalMode::random}) {
    const auto a = evaluate(params, model, ds, mode, cfg);
    cfg.threads = 3;
    const auto b = evaluate(params, model, ds, mode, cfg);
    cfg.threads = 1;
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(a.metrics.size(), 4u);
    for (const double theta : {0.5, 0.7}) EXPECT_GE(a.recall(5, theta), a.recall(1, theta));
    for (const std::size_t n : {1u, 5u}) EXPECT_GE(a.recall(n, 0.5), a.recall(n, 0.7));
    for (const auto& m : a.metrics) {
      EXPECT_GE(m.recall, 0.0);
      EXPECT_LE(m.recall, 100.0);
    }
  }
}

TEST(Evaluate, QueryMaskedMapsIgnoreTheQuery) {
  const auto ds = generate(eval_scenario(), 3);
  const auto model = eval_model();
  const auto params = init_params(model, 4);
  GroundingSample other = ds[0];
  other.query = ds[1].query;
  EXPECT_EQ(score_sample(params, model, ds[0], EvalMode::query_masked, 0, 0),
            score_sample(params, model, other, EvalMode::query_masked, 0, 0));
  EXPECT_FALSE(score_sample(params, model, ds[0], EvalMode::full, 0, 0) ==
               score_sample(params, model, other, EvalMode::full, 0, 0));
}

TEST(Evaluate, RejectsIncompatibleParams) {
  const auto ds = generate(eval_scenario(), 3);
  auto other = eval_model();
  other.dim = 6;
  EXPECT_THROW(evaluate(init_params(other, 1), eval_model(), ds, EvalMode::full, EvalConfig{}),
               ContractViolation);
}

TEST(EvalReport, JsonRoundTripCsvAndTable) {
  const auto ds = generate(eval_scenario(), 20);
  const auto model = eval_model();
  EvalConfig cfg;
  cfg.seed = 5;
  const auto r = evaluate(init_params(model, 1), model, ds, EvalMode::video_only, cfg);
  const auto back = EvalReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.mode, EvalMode::video_only);
  EXPECT_EQ(back.seed, 5u);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "mode,top_n,theta,recall,n_queries,seed");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(r.to_table().find("R@5"), std::string::npos);
  EXPECT_EQ(eval_mode_from_string("query_masked"), EvalMode::query_masked);
  EXPECT_THROW(eval_mode_from_string("bogus"), ContractViolation);
}
