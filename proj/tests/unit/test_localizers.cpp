#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "twinloc/encoders.hpp"
#include "twinloc/localizers.hpp"

using namespace twinloc;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.n_clips = 3;
  m.dim = 4;
  m.vocab_size = 6;
  m.bm_samples = 4;
  return m;
}

ParamStore jiggled_params(const ModelConfig& m, std::uint64_t seed) {
  ParamStore p = init_params(m, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 0; i < p.entry_count(); ++i) {
    if (p.entry(i).name == param::kEmbedding) continue;
    for (auto& v : p.values(i)) v += u(rng);
  }
  return p;
}

ProposalFeatureMap random_features(const ModelConfig& m, const ParamStore& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseMatrix v(m.n_clips, m.dim);
  for (auto& x : v.values()) x = g(rng);
  return encode_proposals(ClipFeatureSequence(v), m.bm_samples, p);
}

}  // namespace

TEST(Fuse, AllOnesQueryKeepsUnitVector) {
  const std::vector<double> fv{0.6, 0.8}, fs{1.0, 1.0};
  const auto m = fuse(fv, fs);
  EXPECT_NEAR(m[0], 0.6, 1e-15);
  EXPECT_NEAR(m[1], 0.8, 1e-15);
}

TEST(Fuse, ZeroQueryGivesZeroWithoutNan) {
  const std::vector<double> fv{0.6, 0.8}, fs{0.0, 0.0};
  for (const double v : fuse(fv, fs)) EXPECT_EQ(v, 0.0);
}

TEST(Fuse, HandComputedExample) {
  const std::vector<double> fv{1.0, 2.0}, fs{2.0, 1.0};
  const auto m = fuse(fv, fs);
  EXPECT_NEAR(m[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m[1], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Fuse, RejectsDimMismatch) {
  const std::vector<double> fv{1.0, 2.0}, fs{2.0};
  EXPECT_THROW(fuse(fv, fs), ContractViolation);
}

TEST(Fuse, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> h(5), r(5);
  for (auto& v : h) v = g(rng);
  for (auto& v : r) v = g(rng);
  const std::vector<double> ones(5, 1.0);
  double norm = 0.0;
  for (const double v : h) norm += v * v;
  norm = std::sqrt(norm);
  const auto d = fuse_backward(fuse(h, ones), norm, r);
  for (std::size_t i = 0; i < 5; ++i) {
    auto up = h, down = h;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    double fu = 0.0, fd = 0.0;
    const auto mu = fuse(up, ones), md = fuse(down, ones);
    for (std::size_t k = 0; k < 5; ++k) {
      fu += r[k] * mu[k];
      fd += r[k] * md[k];
    }
    EXPECT_NEAR(d[i], (fu - fd) / 2e-6, 1e-7);
  }
}

TEST(VisualHead, ZeroWeightsGiveHalfEverywhere) {
  const auto m = tiny_model();
  ParamStore p = init_params(m, 1);
  for (auto& v : p.values(param::kVisualWeight)) v = 0.0;
  for (auto& v : p.values(param::kVisualBias)) v = 0.0;
  const auto s = visual_score_map(random_features(m, p, 2), p);
  for (const double v : s.scores) EXPECT_EQ(v, 0.5);
}

TEST(VisualHead, BiasShiftKeepsRanking) {
  const auto m = tiny_model();
  ParamStore p = jiggled_params(m, 3);
  const auto f = random_features(m, p, 4);
  const auto before = visual_score_map(f, p);
  p.values(param::kVisualBias)[0] += 1.3;
  const auto after = visual_score_map(f, p);
  EXPECT_EQ(argmax_cell(before), argmax_cell(after));
  for (std::size_t i = 0; i < before.scores.size(); ++i) {
    for (std::size_t j = 0; j < before.scores.size(); ++j) {
      EXPECT_EQ(before.scores[i] < before.scores[j], after.scores[i] < after.scores[j]);
    }
  }
}

TEST(VisualHead, MatchesPerCellRecomputation) {
  const auto m = tiny_model();
  const ParamStore p = jiggled_params(m, 5);
  const auto f = random_features(m, p, 6);
  const auto s = visual_score_map(f, p);
  const auto w = p.values(param::kVisualWeight);
  const double b = p.values(param::kVisualBias)[0];
  const auto prior = p.values(param::kVisualPrior);
  for (std::size_t c = 0; c < f.grid.cell_count(); ++c) {
    double z = b + prior[c];
    for (std::size_t k = 0; k < m.dim; ++k) z += f.features(c, k) * w[k];
    EXPECT_NEAR(s.scores[c], 1.0 / (1.0 + std::exp(-z)), 1e-14);
    EXPECT_GT(s.scores[c], 0.0);
    EXPECT_LT(s.scores[c], 1.0);
  }
}

TEST(FusionHead, ZeroQueryGivesConstantMap) {
  const auto m = tiny_model();
  const ParamStore p = init_params(m, 7);
  const auto f = random_features(m, p, 8);
  const auto s = vs_score_map(f, QueryFeature{std::vector<double>(m.dim, 0.0)}, p);
  const double expected = sigmoid(p.values(param::kFusionBias)[0]);
  for (const double v : s.scores) EXPECT_EQ(v, expected);
}

TEST(FusionHead, PositiveQueryScalingLeavesMapUnchanged) {
  const auto m = tiny_model();
  const ParamStore p = jiggled_params(m, 9);
  const auto f = random_features(m, p, 10);
  const auto q = encode_query({{1, 2}}, p);
  const auto base = vs_score_map(f, q, p);
  for (const double k : {0.01, 3.0, 250.0}) {
    QueryFeature scaled = q;
    for (auto& v : scaled.values) v *= k;
    const auto s = vs_score_map(f, scaled, p);
    EXPECT_EQ(argmax_cell(s), argmax_cell(base));
    for (std::size_t c = 0; c < s.scores.size(); ++c) EXPECT_NEAR(s.scores[c], base.scores[c], 1e-12);
  }
}

TEST(FusionHead, MatchesPerCellRecomputation) {
  const auto m = tiny_model();
  const ParamStore p = jiggled_params(m, 11);
  const auto f = random_features(m, p, 12);
  const auto q = encode_query({{4}}, p);
  const auto s = vs_score_map(f, q, p);
  const auto w = p.values(param::kFusionWeight);
  const double b = p.values(param::kFusionBias)[0];
  const auto prior = p.values(param::kFusionPrior);
  for (std::size_t c = 0; c < f.grid.cell_count(); ++c) {
    std::vector<double> h(m.dim);
    double n = 0.0;
    for (std::size_t k = 0; k < m.dim; ++k) {
      h[k] = f.features(c, k) * q.values[k];
      n += h[k] * h[k];
    }
    n = std::max(std::sqrt(n), 1e-8);
    double z = b + prior[c];
    for (std::size_t k = 0; k < m.dim; ++k) z += h[k] / n * w[k];
    EXPECT_NEAR(s.scores[c], 1.0 / (1.0 + std::exp(-z)), 1e-14);
  }
}

TEST(FusionHead, FusedRowsHaveUnitNorm) {
  const auto m = tiny_model();
  const ParamStore p = jiggled_params(m, 13);
  const auto pass = run_fusion_head(random_features(m, p, 14), encode_query({{1}}, p), p);
  for (std::size_t c = 0; c < pass.fused.fused.rows(); ++c) {
    double n = 0.0;
    for (const double v : pass.fused.fused.row(c)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(ArgmaxCell, UniqueMaxTiesAndScanOracle) {
  const ProposalGrid g(4);
  ScoreMap m{g, std::vector<double>(g.cell_count(), 0.1)};
  m.scores[g.index_of(1, 3)] = 0.9;
  EXPECT_EQ(argmax_cell(m), (Cell{1, 3}));
  std::fill(m.scores.begin(), m.scores.end(), 0.4);
  EXPECT_EQ(argmax_cell(m), (Cell{0, 0}));

  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> u(0, 5);  // coarse values force ties
  for (int trial = 0; trial < 200; ++trial) {
    for (auto& v : m.scores) v = u(rng) / 5.0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < m.scores.size(); ++i) {
      if (m.scores[i] > m.scores[best]) best = i;
    }
    EXPECT_EQ(argmax_cell(m), g.cell(best));
  }
}

TEST(HeadGradients, BothHeadsPassGradCheck) {
  const auto m = tiny_model();
  const ParamStore params = jiggled_params(m, 16);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseMatrix v(m.n_clips, m.dim);
  for (auto& x : v.values()) x = g(rng);
  const auto pooled = pool_proposals(ClipFeatureSequence(v), m.bm_samples);
  const TokenSequence tokens{{1, 2, 5}};
  std::vector<double> rv(m.grid().cell_count()), rf(m.grid().cell_count());
  for (auto& x : rv) x = g(rng);
  for (auto& x : rf) x = g(rng);

  const ScalarLoss loss = [&](const ParamStore& p) {
    const auto f = project_proposals(m.grid(), pooled, p);
    const auto sv = visual_score_map(f, p);
    const auto sf = vs_score_map(f, encode_query(tokens, p), p);
    double acc = 0.0;
    for (std::size_t c = 0; c < rv.size(); ++c) acc += rv[c] * sv.scores[c] + rf[c] * sf.scores[c];
    return acc;
  };

  ParamStore grads = params.zeros_like();
  const auto f = project_proposals(m.grid(), pooled, params);
  const auto q = encode_query(tokens, params);
  const auto sv = visual_score_map(f, params);
  const auto pass = run_fusion_head(f, q, params);
  const auto dfv = visual_head_backward(f, sv, rv, params, grads);
  auto fg = fusion_head_backward(f, q, pass, rf, params, grads);
  for (std::size_t k = 0; k < dfv.size(); ++k) fg.d_features.values()[k] += dfv.values()[k];
  project_proposals_backward(pooled, fg.d_features, params, grads);
  encode_query_backward(tokens, fg.d_query, params, grads);
  EXPECT_LT(grad_check(loss, params, grads).max_rel_error, 1e-5);
}
