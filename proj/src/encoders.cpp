#include "twinloc/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "twinloc/rng.hpp"

namespace twinloc {

void ModelConfig::validate() const {
  if (n_clips == 0) throw ContractViolation("model: n_clips must be >= 1");
  if (dim == 0) throw ContractViolation("model: dim must be >= 1");
  if (vocab_size < 2) throw ContractViolation("model: vocab_size must be >= 2");
  if (bm_samples == 0) throw ContractViolation("model: bm_samples must be >= 1");
}

namespace {

std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::mt19937_64 rng(derive_seed(seed, 0x1417));

  ParamStore p;
  p.add(param::kVideoWeight, {d, d}, uniform_values(rng, d * d, bound));
  p.add(param::kVideoBias, {d}, uniform_values(rng, d, bound));

  auto embedding = uniform_values(rng, cfg.vocab_size * d, 1.0);
  std::fill(embedding.begin(), embedding.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
  p.add(param::kEmbedding, {cfg.vocab_size, d}, std::move(embedding));
  p.add(param::kQueryWeight, {d, d}, uniform_values(rng, d * d, bound));
  p.add(param::kQueryBias, {d}, uniform_values(rng, d, bound));

  p.add(param::kVisualWeight, {d, 1}, uniform_values(rng, d, bound));
  p.add(param::kVisualBias, {1}, uniform_values(rng, 1, bound));
  p.add(param::kFusionWeight, {d, 1}, uniform_values(rng, d, bound));
  p.add(param::kFusionBias, {1}, uniform_values(rng, 1, bound));
  if (cfg.cell_prior) {
    const std::size_t cells = cfg.grid().cell_count();
    p.add_zeros(param::kVisualPrior, {cells});
    p.add_zeros(param::kFusionPrior, {cells});
  }
  return p;
}

void check_param_layout(const ParamStore& params, const ModelConfig& cfg) {
  const ParamStore expected = init_params(cfg, 0);
  if (!params.same_layout(expected)) {
    throw ContractViolation("parameters do not match the model configuration (n_clips=" +
                            std::to_string(cfg.n_clips) + ", dim=" + std::to_string(cfg.dim) +
                            ", vocab_size=" + std::to_string(cfg.vocab_size) + ")");
  }
}

DenseMatrix pool_proposals(const ClipFeatureSequence& clips, std::size_t samples) {
  const ProposalGrid grid(clips.n_clips());
  return matmul(pooling_matrix(grid, samples), clips.features());
}

ProposalFeatureMap project_proposals(const ProposalGrid& grid, const DenseMatrix& pooled,
                                     const ParamStore& params) {
  if (pooled.rows() != grid.cell_count()) {
    throw ContractViolation("project_proposals: pooled rows do not match the grid");
  }
  const DenseMatrix w = params.matrix(params.index_of(param::kVideoWeight));
  return {grid, affine(pooled, w, params.values(param::kVideoBias))};
}

void project_proposals_backward(const DenseMatrix& pooled, const DenseMatrix& d_features,
                                const ParamStore& params, ParamStore& grads) {
  const std::size_t wi = params.index_of(param::kVideoWeight);
  const DenseMatrix w = params.matrix(wi);
  if (pooled.cols() != w.rows() || d_features.cols() != w.cols() ||
      d_features.rows() != pooled.rows()) {
    throw ContractViolation("project_proposals_backward: shape mismatch");
  }
  const DenseMatrix dw = matmul_tn(pooled, d_features);
  auto gw = grads.values(wi);
  for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += dw.values()[k];
  auto gb = grads.values(param::kVideoBias);
  for (std::size_t i = 0; i < d_features.rows(); ++i) {
    const auto row = d_features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
  }
}

ProposalFeatureMap encode_proposals(const ClipFeatureSequence& clips, std::size_t samples,
                                    const ParamStore& params) {
  const auto& w = params.entry(params.index_of(param::kVideoWeight));
  if (w.shape[0] != clips.dim()) {
    throw ContractViolation("encode_proposals: clip width " + std::to_string(clips.dim()) +
                            " does not match projection input " + std::to_string(w.shape[0]));
  }
  return project_proposals(ProposalGrid(clips.n_clips()), pool_proposals(clips, samples), params);
}

namespace {

std::vector<double> mean_embedding(const TokenSequence& tokens, const ParamEntry& table) {
  if (tokens.ids.empty()) throw ContractViolation("encode_query: empty token sequence");
  const std::size_t vocab = table.shape[0];
  const std::size_t d = table.shape[1];
  std::vector<double> e(d, 0.0);
  for (const auto id : tokens.ids) {
    if (id >= vocab) {
      throw ContractViolation("encode_query: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(vocab));
    }
    if (id == kNullToken) continue;
    const double* row = table.values.data() + static_cast<std::size_t>(id) * d;
    for (std::size_t k = 0; k < d; ++k) e[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(tokens.ids.size());
  for (auto& v : e) v *= inv;
  return e;
}

}  // namespace

QueryFeature encode_query(const TokenSequence& tokens, const ParamStore& params) {
  const auto& table = params.entry(params.index_of(param::kEmbedding));
  const auto e = mean_embedding(tokens, table);
  const DenseMatrix w = params.matrix(params.index_of(param::kQueryWeight));
  const DenseMatrix x(1, e.size(), e);
  const DenseMatrix y = affine(x, w, params.values(param::kQueryBias));
  return {std::vector<double>(y.values().begin(), y.values().end())};
}

void encode_query_backward(const TokenSequence& tokens, std::span<const double> d_query,
                           const ParamStore& params, ParamStore& grads) {
  const std::size_t ti = params.index_of(param::kEmbedding);
  const auto& table = params.entry(ti);
  const auto e = mean_embedding(tokens, table);
  const std::size_t wi = params.index_of(param::kQueryWeight);
  const DenseMatrix w = params.matrix(wi);
  if (d_query.size() != w.cols()) throw ContractViolation("encode_query_backward: bad gradient");

  const DenseMatrix x(1, e.size(), e);
  const DenseMatrix dy(1, d_query.size(), std::vector<double>(d_query.begin(), d_query.end()));
  const AffineGrads g = affine_backward(x, w, dy);

  auto gw = grads.values(wi);
  for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += g.dw.values()[k];
  auto gb = grads.values(param::kQueryBias);
  for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g.db[k];

  const std::size_t d = table.shape[1];
  const double inv = 1.0 / static_cast<double>(tokens.ids.size());
  auto gt = grads.values(ti);
  for (const auto id : tokens.ids) {
    if (id == kNullToken) continue;
    double* row = gt.data() + static_cast<std::size_t>(id) * d;
    for (std::size_t k = 0; k < d; ++k) row[k] += inv * g.dx(0, k);
  }
}

TokenSequence mask_query(const TokenSequence&) { return {{kNullToken}}; }

}  // namespace twinloc
