#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twinloc/encoders.hpp"
#include "twinloc/grounding_sample.hpp"
#include "twinloc/localizers.hpp"
#include "twinloc/numerics.hpp"

namespace twinloc {

/// tll: the visual-semantic loss is never reweighed (weight ≡ 1).
/// debias: the visual-semantic loss is scaled by 1 - s^alpha per sample.
enum class TrainMode { tll, debias };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::debias;
  double alpha = 1.0;
  AdamConfig adam{};
  std::size_t batch_size = 4;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  LabelConfig labels{};
  bool detach_bias_weight = true;
  bool stop_encoder_grad_from_visual = false;
  Reduction reduction = Reduction::mean;
  std::size_t threads = 1;

  void validate() const;
};

struct LossBreakdown {
  double l_v = 0.0;
  double l_vs_raw = 0.0;
  double s = 0.0;
  double weight = 1.0;
  double l_vs_adjusted = 0.0;
  double l_total = 0.0;
  /// The label map had no positive cell, so s fell back to 0.
  bool empty_labels = false;
};

BceResult loss_visual(const ScoreMap& p_prime, const SoftLabelMap& gt,
                      Reduction reduction = Reduction::mean);

struct SimilarityResult {
  double s = 0.0;
  std::vector<double> grad;  // ds/dp'
  bool empty_labels = false;
};

/// Cosine similarity between the video-only score map and the label map.
/// An all-zero label map yields s = 0 with empty_labels set.
SimilarityResult bias_similarity_with_grad(const ScoreMap& p_prime, const SoftLabelMap& gt);
inline double bias_similarity(const ScoreMap& p_prime, const SoftLabelMap& gt) {
  return bias_similarity_with_grad(p_prime, gt).s;
}

struct Reweighed {
  double weight = 1.0;
  double adjusted = 0.0;
};

/// weight = 1 - s^alpha, adjusted = weight * l_vs.
Reweighed reweigh(double l_vs, double s, double alpha);

/// Everything about a sample that does not depend on the parameters.
struct PreparedSample {
  DenseMatrix pooled;
  SoftLabelMap labels;
  TokenSequence query;
};

PreparedSample prepare_sample(const GroundingSample& sample, const ModelConfig& model,
                              const LabelConfig& labels);

struct SampleLossOptions {
  /// Use this reweighing factor instead of 1 - s^alpha. The weight is then a
  /// constant of the parameters.
  std::optional<double> weight_override;
};

/// Total loss L_v + weight·L_vs for one sample. When `grads` is non-null,
/// the gradient of that loss is added into it.
LossBreakdown sample_loss(const PreparedSample& sample, const ParamStore& params,
                          const ModelConfig& model, const TrainConfig& cfg, ParamStore* grads,
                          const SampleLossOptions& options = {});

LossBreakdown sample_loss(const GroundingSample& sample, const ParamStore& params,
                          const ModelConfig& model, const TrainConfig& cfg, ParamStore* grads,
                          const SampleLossOptions& options = {});

struct EpochRecord {
  std::size_t epoch = 0;
  double l_v = 0.0;
  double l_vs_raw = 0.0;
  double s = 0.0;
  double weight = 0.0;
  double l_total = 0.0;
  std::size_t empty_label_samples = 0;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded mini-batch Adam training of both heads. Parameters start from
/// init_params(model, cfg.seed) unless `initial` is given.
TrainResult train(const std::vector<GroundingSample>& dataset, const ModelConfig& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {},
                  const ParamStore* initial = nullptr);

}  // namespace twinloc
