#include "twinloc/localizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace twinloc {

std::vector<double> fuse(std::span<const double> f_v, std::span<const double> f_s, double eps) {
  if (f_v.size() != f_s.size()) {
    throw ContractViolation("fuse: video width " + std::to_string(f_v.size()) +
                            " != query width " + std::to_string(f_s.size()));
  }
  std::vector<double> m(f_v.size());
  double sq = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) {
    m[k] = f_v[k] * f_s[k];
    sq += m[k] * m[k];
  }
  const double denom = std::max(std::sqrt(sq), eps);
  for (auto& v : m) v /= denom;
  return m;
}

std::vector<double> fuse_backward(std::span<const double> fused, double norm,
                                  std::span<const double> d_fused, double eps) {
  std::vector<double> dh(fused.size());
  if (norm > eps) {
    double dot = 0.0;
    for (std::size_t k = 0; k < fused.size(); ++k) dot += fused[k] * d_fused[k];
    for (std::size_t k = 0; k < fused.size(); ++k) dh[k] = (d_fused[k] - fused[k] * dot) / norm;
  } else {
    for (std::size_t k = 0; k < fused.size(); ++k) dh[k] = d_fused[k] / eps;
  }
  return dh;
}

namespace {

struct HeadParams {
  std::span<const double> weight;
  double bias;
  std::span<const double> prior;  // empty when the model has no cell prior
};

HeadParams head_params(const ParamStore& params, const char* weight, const char* bias,
                       const char* prior, std::size_t dim, std::size_t cells) {
  HeadParams h{params.values(weight), params.values(bias)[0], {}};
  if (h.weight.size() != dim) {
    throw ContractViolation(std::string("head weight '") + weight + "' does not match width " +
                            std::to_string(dim));
  }
  if (params.contains(prior)) {
    h.prior = params.values(prior);
    if (h.prior.size() != cells) {
      throw ContractViolation(std::string("cell prior '") + prior + "' does not match the grid");
    }
  }
  return h;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

// Shared tail of both heads: dL/dz from dL/dp, then bias/prior/weight grads.
std::vector<double> head_logit_grads(const ScoreMap& scores, std::span<const double> d_scores,
                                     const DenseMatrix& inputs, const ParamStore& params,
                                     ParamStore& grads, const char* weight, const char* bias,
                                     const char* prior) {
  if (d_scores.size() != scores.scores.size()) {
    throw ContractViolation("head backward: gradient length does not match the score map");
  }
  std::vector<double> dz(d_scores.size());
  for (std::size_t i = 0; i < dz.size(); ++i) {
    const double p = scores.scores[i];
    dz[i] = d_scores[i] * p * (1.0 - p);
  }
  auto gw = grads.values(weight);
  double gb = 0.0;
  for (std::size_t i = 0; i < dz.size(); ++i) {
    gb += dz[i];
    const auto x = inputs.row(i);
    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += dz[i] * x[k];
  }
  grads.values(bias)[0] += gb;
  if (params.contains(prior)) {
    auto gp = grads.values(prior);
    for (std::size_t i = 0; i < dz.size(); ++i) gp[i] += dz[i];
  }
  return dz;
}

}  // namespace

ScoreMap visual_score_map(const ProposalFeatureMap& feats, const ParamStore& params) {
  const auto h = head_params(params, param::kVisualWeight, param::kVisualBias,
                             param::kVisualPrior, feats.features.cols(), feats.grid.cell_count());
  ScoreMap out{feats.grid, std::vector<double>(feats.grid.cell_count())};
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    double z = dot(feats.features.row(i), h.weight) + h.bias;
    if (!h.prior.empty()) z += h.prior[i];
    out.scores[i] = sigmoid(z);
  }
  return out;
}

FusionHeadPass run_fusion_head(const ProposalFeatureMap& feats, const QueryFeature& q,
                               const ParamStore& params) {
  const std::size_t d = feats.features.cols();
  if (q.values.size() != d) {
    throw ContractViolation("vs_score_map: query width " + std::to_string(q.values.size()) +
                            " != video width " + std::to_string(d));
  }
  const auto h = head_params(params, param::kFusionWeight, param::kFusionBias,
                             param::kFusionPrior, d, feats.grid.cell_count());
  const std::size_t cells = feats.grid.cell_count();
  FusionHeadPass pass{{feats.grid, DenseMatrix(cells, d), std::vector<double>(cells)},
                      {feats.grid, std::vector<double>(cells)}};
  for (std::size_t i = 0; i < cells; ++i) {
    const auto f = feats.features.row(i);
    auto m = pass.fused.fused.row(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      m[k] = f[k] * q.values[k];
      sq += m[k] * m[k];
    }
    const double norm = std::sqrt(sq);
    pass.fused.norms[i] = norm;
    const double denom = std::max(norm, kFuseEps);
    for (auto& v : m) v /= denom;
    double z = dot(m, h.weight) + h.bias;
    if (!h.prior.empty()) z += h.prior[i];
    pass.scores.scores[i] = sigmoid(z);
  }
  return pass;
}

Cell argmax_cell(const ScoreMap& map) {
  if (map.scores.empty()) throw ContractViolation("argmax_cell: empty score map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.scores.size(); ++i) {
    if (map.scores[i] > map.scores[best]) best = i;
  }
  return map.grid.cell(best);
}

DenseMatrix visual_head_backward(const ProposalFeatureMap& feats, const ScoreMap& scores,
                                 std::span<const double> d_scores, const ParamStore& params,
                                 ParamStore& grads) {
  const auto dz = head_logit_grads(scores, d_scores, feats.features, params, grads,
                                   param::kVisualWeight, param::kVisualBias, param::kVisualPrior);
  const auto w = params.values(param::kVisualWeight);
  DenseMatrix d_features(feats.features.rows(), feats.features.cols());
  for (std::size_t i = 0; i < dz.size(); ++i) {
    auto row = d_features.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = dz[i] * w[k];
  }
  return d_features;
}

FusionHeadGrads fusion_head_backward(const ProposalFeatureMap& feats, const QueryFeature& q,
                                     const FusionHeadPass& pass, std::span<const double> d_scores,
                                     const ParamStore& params, ParamStore& grads) {
  const auto dz = head_logit_grads(pass.scores, d_scores, pass.fused.fused, params, grads,
                                   param::kFusionWeight, param::kFusionBias, param::kFusionPrior);
  const auto w = params.values(param::kFusionWeight);
  const std::size_t d = feats.features.cols();
  FusionHeadGrads out{DenseMatrix(feats.features.rows(), d), std::vector<double>(d, 0.0)};
  std::vector<double> d_fused(d);
  for (std::size_t i = 0; i < dz.size(); ++i) {
    if (dz[i] == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) d_fused[k] = dz[i] * w[k];
    const auto dh = fuse_backward(pass.fused.fused.row(i), pass.fused.norms[i], d_fused);
    const auto f = feats.features.row(i);
    auto df = out.d_features.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      df[k] = dh[k] * q.values[k];
      out.d_query[k] += dh[k] * f[k];
    }
  }
  return out;
}

}  // namespace twinloc
