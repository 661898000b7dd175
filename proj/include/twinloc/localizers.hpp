#pragma once

#include <span>
#include <vector>

#include "twinloc/encoders.hpp"
#include "twinloc/proposal_map.hpp"

namespace twinloc {

inline constexpr double kFuseEps = 1e-8;

/// m = (f_v ⊙ f_s) / max(‖f_v ⊙ f_s‖₂, eps).
std::vector<double> fuse(std::span<const double> f_v, std::span<const double> f_s,
                         double eps = kFuseEps);

/// Backward of fuse given the fused output and the pre-normalization norm.
/// Returns dL/d(f_v ⊙ f_s).
std::vector<double> fuse_backward(std::span<const double> fused, double norm,
                                  std::span<const double> d_fused, double eps = kFuseEps);

/// Intermediate values of the visual-semantic head kept for the backward pass.
struct FusedFeatureMap {
  ProposalGrid grid;
  DenseMatrix fused;          // |C|×d, rows have norm <= 1
  std::vector<double> norms;  // ‖f_v ⊙ f_s‖ per cell before normalization
};

struct FusionHeadPass {
  FusedFeatureMap fused;
  ScoreMap scores;
};

/// Video-only head: sigmoid(f_v·w + b [+ prior]) per cell.
ScoreMap visual_score_map(const ProposalFeatureMap& feats, const ParamStore& params);

FusionHeadPass run_fusion_head(const ProposalFeatureMap& feats, const QueryFeature& q,
                               const ParamStore& params);

/// Visual-semantic head: sigmoid(fuse(f_v, q)·w + b [+ prior]) per cell.
inline ScoreMap vs_score_map(const ProposalFeatureMap& feats, const QueryFeature& q,
                             const ParamStore& params) {
  return run_fusion_head(feats, q, params).scores;
}

/// Highest-scoring cell; ties go to the smallest grid index.
Cell argmax_cell(const ScoreMap& map);

/// Accumulates head parameter gradients into `grads` given dL/dp' and
/// returns dL/d(features).
DenseMatrix visual_head_backward(const ProposalFeatureMap& feats, const ScoreMap& scores,
                                 std::span<const double> d_scores, const ParamStore& params,
                                 ParamStore& grads);

struct FusionHeadGrads {
  DenseMatrix d_features;
  std::vector<double> d_query;
};

FusionHeadGrads fusion_head_backward(const ProposalFeatureMap& feats, const QueryFeature& q,
                                     const FusionHeadPass& pass, std::span<const double> d_scores,
                                     const ParamStore& params, ParamStore& grads);

}  // namespace twinloc
