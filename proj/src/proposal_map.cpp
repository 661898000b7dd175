#include "twinloc/proposal_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace twinloc {

TemporalInterval TemporalInterval::make(double start, double end) {
  TemporalInterval t{start, end};
  if (!t.valid()) {
    throw ContractViolation("TemporalInterval: invalid span [" + std::to_string(start) + ", " +
                            std::to_string(end) + "]");
  }
  return t;
}

ProposalGrid::ProposalGrid(std::size_t n_clips) : n_clips_(n_clips) {
  if (n_clips == 0) throw ContractViolation("ProposalGrid: need at least one clip");
  cells_.reserve(cell_count());
  for (std::size_t a = 0; a < n_clips; ++a) {
    for (std::size_t b = a; b < n_clips; ++b) cells_.push_back({a, b});
  }
}

std::size_t ProposalGrid::index_of(std::size_t a, std::size_t b) const {
  if (a > b || b >= n_clips_) {
    throw ContractViolation("ProposalGrid: invalid cell (" + std::to_string(a) + ", " +
                            std::to_string(b) + ")");
  }
  // rows 0..a-1 hold N, N-1, ..., N-a+1 cells
  return a * n_clips_ - a * (a - 1) / 2 + (b - a);
}

void LabelConfig::validate() const {
  if (!(0.0 <= mu_min && mu_min < mu_max && mu_max <= 1.0)) {
    throw ContractViolation("LabelConfig: need 0 <= mu_min < mu_max <= 1");
  }
}

ClipFeatureSequence::ClipFeatureSequence(DenseMatrix features) : features_(std::move(features)) {
  if (features_.rows() == 0 || features_.cols() == 0) {
    throw ContractViolation("ClipFeatureSequence: empty feature matrix");
  }
  if (!features_.all_finite()) throw ContractViolation("ClipFeatureSequence: non-finite feature");
}

TemporalInterval interval_of(std::size_t a, std::size_t b, std::size_t n_clips) {
  if (a > b || b >= n_clips) {
    throw ContractViolation("interval_of: invalid cell (" + std::to_string(a) + ", " +
                            std::to_string(b) + ") for N=" + std::to_string(n_clips));
  }
  const double n = static_cast<double>(n_clips);
  return {static_cast<double>(a) / n, static_cast<double>(b + 1) / n};
}

double temporal_iou(const TemporalInterval& x, const TemporalInterval& y) {
  const double inter = std::max(0.0, std::min(x.end, y.end) - std::max(x.start, y.start));
  const double uni = std::max(x.end, y.end) - std::min(x.start, y.start);
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return inter / uni;
}

double soft_label(double iou, const LabelConfig& cfg) {
  cfg.validate();
  if (iou <= cfg.mu_min) return 0.0;
  if (iou >= cfg.mu_max) return 1.0;
  return (iou - cfg.mu_min) / (cfg.mu_max - cfg.mu_min);
}

SoftLabelMap build_label_map(const TemporalInterval& gt, const ProposalGrid& grid,
                             const LabelConfig& cfg) {
  cfg.validate();
  if (!gt.valid()) throw ContractViolation("build_label_map: invalid ground-truth interval");
  SoftLabelMap out{grid, {}};
  out.labels.reserve(grid.cell_count());
  for (const auto& c : grid.cells()) {
    out.labels.push_back(soft_label(temporal_iou(interval_of(c, grid.n_clips()), gt), cfg));
  }
  return out;
}

namespace {

// Adds the interpolation weights of one pooled cell into `row` (length N).
void accumulate_pool_weights(std::size_t a, std::size_t b, std::size_t samples,
                             std::span<double> row) {
  const double span = static_cast<double>(b + 1 - a);
  const double per_sample = 1.0 / static_cast<double>(samples);
  for (std::size_t j = 0; j < samples; ++j) {
    const double x = static_cast<double>(a) + (static_cast<double>(j) + 0.5) * span * per_sample;
    const double u = x - 0.5;
    const double floor_u = std::floor(u);
    const double t = u - floor_u;
    const auto lo_raw = static_cast<long long>(floor_u);
    const auto clamp_idx = [&](long long i) {
      return static_cast<std::size_t>(
          std::clamp<long long>(i, static_cast<long long>(a), static_cast<long long>(b)));
    };
    const std::size_t lo = clamp_idx(lo_raw);
    const std::size_t hi = clamp_idx(lo_raw + 1);
    row[lo] += (1.0 - t) * per_sample;
    row[hi] += t * per_sample;
  }
}

}  // namespace

std::vector<double> bm_pool(const ClipFeatureSequence& clips, std::size_t a, std::size_t b,
                            std::size_t samples) {
  if (samples == 0) throw ContractViolation("bm_pool: sample count must be >= 1");
  if (a > b || b >= clips.n_clips()) throw ContractViolation("bm_pool: invalid clip range");
  std::vector<double> weights(clips.n_clips(), 0.0);
  accumulate_pool_weights(a, b, samples, weights);
  std::vector<double> out(clips.dim(), 0.0);
  for (std::size_t i = a; i <= b; ++i) {
    if (weights[i] == 0.0) continue;
    const auto v = clips.clip(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weights[i] * v[k];
  }
  return out;
}

DenseMatrix pooling_matrix(const ProposalGrid& grid, std::size_t samples) {
  if (samples == 0) throw ContractViolation("pooling_matrix: sample count must be >= 1");
  DenseMatrix p(grid.cell_count(), grid.n_clips());
  for (std::size_t k = 0; k < grid.cell_count(); ++k) {
    const Cell c = grid.cell(k);
    accumulate_pool_weights(c.a, c.b, samples, p.row(k));
  }
  return p;
}

std::vector<double> flatten_valid(const DenseMatrix& square) {
  if (square.rows() != square.cols()) throw ContractViolation("flatten_valid: matrix not square");
  const ProposalGrid grid(square.rows());
  std::vector<double> out;
  out.reserve(grid.cell_count());
  for (const auto& c : grid.cells()) out.push_back(square(c.a, c.b));
  return out;
}

DenseMatrix unflatten_valid(const ProposalGrid& grid, std::span<const double> flat) {
  if (flat.size() != grid.cell_count()) {
    throw ContractViolation("unflatten_valid: expected " + std::to_string(grid.cell_count()) +
                            " values, got " + std::to_string(flat.size()));
  }
  DenseMatrix square(grid.n_clips(), grid.n_clips());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const Cell c = grid.cell(k);
    square(c.a, c.b) = flat[k];
  }
  return square;
}

}  // namespace twinloc
