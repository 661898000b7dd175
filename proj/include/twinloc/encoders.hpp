#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "twinloc/grounding_sample.hpp"
#include "twinloc/numerics.hpp"
#include "twinloc/proposal_map.hpp"

namespace twinloc {

/// Shapes shared by both localizers. Video and query features have the same
/// width so they can be fused elementwise.
struct ModelConfig {
  std::size_t n_clips = 16;
  std::size_t dim = 32;
  std::size_t vocab_size = 64;
  std::size_t bm_samples = 8;
  /// Learned per-cell logit offset in each head (see README, "Model").
  bool cell_prior = true;

  void validate() const;
  ProposalGrid grid() const { return ProposalGrid(n_clips); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace param {
inline constexpr const char* kVideoWeight = "video.proj.weight";
inline constexpr const char* kVideoBias = "video.proj.bias";
inline constexpr const char* kEmbedding = "query.embedding";
inline constexpr const char* kQueryWeight = "query.proj.weight";
inline constexpr const char* kQueryBias = "query.proj.bias";
inline constexpr const char* kVisualWeight = "visual_head.weight";
inline constexpr const char* kVisualBias = "visual_head.bias";
inline constexpr const char* kVisualPrior = "visual_head.cell_prior";
inline constexpr const char* kFusionWeight = "fusion_head.weight";
inline constexpr const char* kFusionBias = "fusion_head.bias";
inline constexpr const char* kFusionPrior = "fusion_head.cell_prior";
}  // namespace param

/// Seeded initialization: affine weights and biases uniform in
/// ±1/sqrt(fan_in), embeddings uniform in ±1 with the null row zeroed,
/// cell priors zero.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws ContractViolation unless `params` has exactly the layout
/// init_params would produce for `cfg`.
void check_param_layout(const ParamStore& params, const ModelConfig& cfg);

/// Feature per proposal cell, |C|×d.
struct ProposalFeatureMap {
  ProposalGrid grid;
  DenseMatrix features;
};

struct QueryFeature {
  std::vector<double> values;
};

/// Pooled (pre-projection) features for every cell, |C|×d. Parameter free,
/// so the trainer computes it once per sample.
DenseMatrix pool_proposals(const ClipFeatureSequence& clips, std::size_t samples);

/// Shared projection applied to pooled proposal features.
ProposalFeatureMap project_proposals(const ProposalGrid& grid, const DenseMatrix& pooled,
                                     const ParamStore& params);
void project_proposals_backward(const DenseMatrix& pooled, const DenseMatrix& d_features,
                                const ParamStore& params, ParamStore& grads);

ProposalFeatureMap encode_proposals(const ClipFeatureSequence& clips, std::size_t samples,
                                    const ParamStore& params);

/// Mean of token embeddings followed by the query projection.
QueryFeature encode_query(const TokenSequence& tokens, const ParamStore& params);
void encode_query_backward(const TokenSequence& tokens, std::span<const double> d_query,
                           const ParamStore& params, ParamStore& grads);

TokenSequence mask_query(const TokenSequence& tokens);

}  // namespace twinloc
