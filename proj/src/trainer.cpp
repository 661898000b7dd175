#include "twinloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "twinloc/parallel.hpp"
#include "twinloc/rng.hpp"

namespace twinloc {

std::string to_string(TrainMode mode) { return mode == TrainMode::tll ? "tll" : "debias"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "tll") return TrainMode::tll;
  if (s == "debias") return TrainMode::debias;
  throw ContractViolation("unknown training mode '" + s + "' (expected tll or debias)");
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ContractViolation("train: alpha must be > 0");
  if (batch_size == 0) throw ContractViolation("train: batch_size must be >= 1");
  if (!(adam.lr >= 0.0)) throw ContractViolation("train: lr must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ContractViolation("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ContractViolation("train: Adam eps must be > 0");
  if (threads == 0) throw ContractViolation("train: threads must be >= 1");
  labels.validate();
}

BceResult loss_visual(const ScoreMap& p_prime, const SoftLabelMap& gt, Reduction reduction) {
  if (!(p_prime.grid == gt.grid)) throw ContractViolation("loss_visual: grid mismatch");
  return bce(p_prime.scores, gt.labels, reduction);
}

SimilarityResult bias_similarity_with_grad(const ScoreMap& p_prime, const SoftLabelMap& gt) {
  if (!(p_prime.grid == gt.grid)) throw ContractViolation("bias_similarity: grid mismatch");
  const auto& p = p_prime.scores;
  const auto& g = gt.labels;
  double pg = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pg += p[i] * g[i];
    pp += p[i] * p[i];
    gg += g[i] * g[i];
  }
  SimilarityResult out;
  out.grad.assign(p.size(), 0.0);
  if (gg == 0.0) {
    out.empty_labels = true;
    return out;
  }
  if (pp == 0.0) return out;
  const double np = std::sqrt(pp);
  const double ng = std::sqrt(gg);
  out.s = std::clamp(pg / (np * ng), 0.0, 1.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.grad[i] = g[i] / (np * ng) - out.s * p[i] / pp;
  }
  return out;
}

Reweighed reweigh(double l_vs, double s, double alpha) {
  if (!(s >= 0.0 && s <= 1.0)) throw ContractViolation("reweigh: s must lie in [0, 1]");
  if (!(alpha > 0.0)) throw ContractViolation("reweigh: alpha must be > 0");
  const double weight = 1.0 - std::pow(s, alpha);
  return {weight, weight * l_vs};
}

PreparedSample prepare_sample(const GroundingSample& sample, const ModelConfig& model,
                              const LabelConfig& labels) {
  if (sample.video.n_clips() != model.n_clips || sample.video.dim() != model.dim) {
    throw ContractViolation("sample video is " + std::to_string(sample.video.n_clips()) + "x" +
                            std::to_string(sample.video.dim()) + ", model expects " +
                            std::to_string(model.n_clips) + "x" + std::to_string(model.dim));
  }
  return {pool_proposals(sample.video, model.bm_samples),
          build_label_map(sample.gt, model.grid(), labels), sample.query};
}

LossBreakdown sample_loss(const PreparedSample& sample, const ParamStore& params,
                          [[maybe_unused]] const ModelConfig& model, const TrainConfig& cfg,
                          ParamStore* grads, const SampleLossOptions& options) {
  const ProposalGrid& grid = sample.labels.grid;
  const ProposalFeatureMap feats = project_proposals(grid, sample.pooled, params);
  const QueryFeature q = encode_query(sample.query, params);
  const ScoreMap p_visual = visual_score_map(feats, params);
  const FusionHeadPass fusion = run_fusion_head(feats, q, params);

  const BceResult lv = loss_visual(p_visual, sample.labels, cfg.reduction);
  const BceResult lvs = bce(fusion.scores.scores, sample.labels.labels, cfg.reduction);
  const SimilarityResult sim = bias_similarity_with_grad(p_visual, sample.labels);

  LossBreakdown out;
  out.l_v = lv.loss;
  out.l_vs_raw = lvs.loss;
  out.s = sim.s;
  out.empty_labels = sim.empty_labels;
  if (options.weight_override) {
    out.weight = *options.weight_override;
  } else if (cfg.mode == TrainMode::debias) {
    out.weight = reweigh(lvs.loss, sim.s, cfg.alpha).weight;
  } else {
    out.weight = 1.0;
  }
  out.l_vs_adjusted = out.weight * lvs.loss;
  out.l_total = out.l_v + out.l_vs_adjusted;

  if (grads == nullptr) return out;

  std::vector<double> d_visual = lv.grad;
  const bool weight_is_live = cfg.mode == TrainMode::debias && !cfg.detach_bias_weight &&
                              !options.weight_override;
  if (weight_is_live) {
    double dweight_ds = 0.0;
    if (sim.s > 0.0) {
      dweight_ds = -cfg.alpha * std::pow(sim.s, cfg.alpha - 1.0);
    } else if (cfg.alpha == 1.0) {
      dweight_ds = -1.0;
    }
    const double scale = lvs.loss * dweight_ds;
    for (std::size_t i = 0; i < d_visual.size(); ++i) d_visual[i] += scale * sim.grad[i];
  }
  std::vector<double> d_fusion = lvs.grad;
  for (auto& v : d_fusion) v *= out.weight;

  const DenseMatrix d_feats_visual = visual_head_backward(feats, p_visual, d_visual, params, *grads);
  FusionHeadGrads fg = fusion_head_backward(feats, q, fusion, d_fusion, params, *grads);
  if (!cfg.stop_encoder_grad_from_visual) {
    auto dst = fg.d_features.values();
    const auto src = d_feats_visual.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  project_proposals_backward(sample.pooled, fg.d_features, params, *grads);
  encode_query_backward(sample.query, fg.d_query, params, *grads);
  return out;
}

LossBreakdown sample_loss(const GroundingSample& sample, const ParamStore& params,
                          const ModelConfig& model, const TrainConfig& cfg, ParamStore* grads,
                          const SampleLossOptions& options) {
  return sample_loss(prepare_sample(sample, model, cfg.labels), params, model, cfg, grads,
                     options);
}

namespace {

bool finite_breakdown(const LossBreakdown& b) {
  return std::isfinite(b.l_v) && std::isfinite(b.l_vs_raw) && std::isfinite(b.s) &&
         std::isfinite(b.weight) && std::isfinite(b.l_total);
}

}  // namespace

TrainResult train(const std::vector<GroundingSample>& dataset, const ModelConfig& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch,
                  const ParamStore* initial) {
  model.validate();
  cfg.validate();
  if (dataset.empty()) throw ContractViolation("train: empty dataset");

  std::vector<PreparedSample> prepared(dataset.size());
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    prepared[i] = prepare_sample(dataset[i], model, cfg.labels);
  });

  TrainResult result{initial ? *initial : init_params(model, cfg.seed), {}};
  ParamStore& params = result.params;
  check_param_layout(params, model);
  AdamState adam = AdamState::for_params(params, cfg.adam);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t max_batch = std::min(cfg.batch_size, dataset.size());
  std::vector<ParamStore> slots(max_batch, params.zeros_like());
  std::vector<LossBreakdown> parts(max_batch);
  ParamStore batch_grad = params.zeros_like();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      parallel_for(count, cfg.threads, [&](std::size_t i) {
        slots[i].fill(0.0);
        parts[i] = sample_loss(prepared[order[start + i]], params, model, cfg, &slots[i]);
      });

      batch_grad.fill(0.0);
      for (std::size_t i = 0; i < count; ++i) {
        if (!finite_breakdown(parts[i])) {
          std::ostringstream os;
          os << "train: non-finite loss at epoch " << epoch << ", sample "
             << order[start + i] << " (L_v=" << parts[i].l_v << ", L_vs=" << parts[i].l_vs_raw
             << ", s=" << parts[i].s << ")";
          throw NonFiniteError(os.str());
        }
        batch_grad.axpy(1.0, slots[i]);
        rec.l_v += parts[i].l_v;
        rec.l_vs_raw += parts[i].l_vs_raw;
        rec.s += parts[i].s;
        rec.weight += parts[i].weight;
        rec.l_total += parts[i].l_total;
        rec.empty_label_samples += parts[i].empty_labels ? 1 : 0;
      }
      ParamStore scaled = batch_grad.zeros_like();
      scaled.axpy(1.0 / static_cast<double>(count), batch_grad);
      adam_step(params, scaled, adam);
    }

    const double n = static_cast<double>(order.size());
    rec.l_v /= n;
    rec.l_vs_raw /= n;
    rec.s /= n;
    rec.weight /= n;
    rec.l_total /= n;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace twinloc
