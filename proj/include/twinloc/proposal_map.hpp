#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "twinloc/numerics.hpp"

namespace twinloc {

/// Normalized time span, 0 <= start < end <= 1.
struct TemporalInterval {
  double start = 0.0;
  double end = 1.0;

  /// Validating constructor; throws ContractViolation on an invalid span.
  static TemporalInterval make(double start, double end);
  bool valid() const { return 0.0 <= start && start < end && end <= 1.0; }
  double length() const { return end - start; }

  friend bool operator==(const TemporalInterval&, const TemporalInterval&) = default;
};

/// Clip index pair (a, b), a <= b, clip b inclusive.
struct Cell {
  std::size_t a = 0;
  std::size_t b = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Upper-triangular grid of all proposals over N clips. Cells are ordered
/// row-major: a outer, b inner.
class ProposalGrid {
 public:
  ProposalGrid() = default;
  explicit ProposalGrid(std::size_t n_clips);

  std::size_t n_clips() const { return n_clips_; }
  std::size_t cell_count() const { return n_clips_ * (n_clips_ + 1) / 2; }
  std::size_t index_of(std::size_t a, std::size_t b) const;
  Cell cell(std::size_t index) const { return cells_.at(index); }
  const std::vector<Cell>& cells() const { return cells_; }

  friend bool operator==(const ProposalGrid& x, const ProposalGrid& y) {
    return x.n_clips_ == y.n_clips_;
  }

 private:
  std::size_t n_clips_ = 0;
  std::vector<Cell> cells_;
};

/// Per-cell values in grid order. Used for both score maps and soft labels.
struct ScoreMap {
  ProposalGrid grid;
  std::vector<double> scores;

  friend bool operator==(const ScoreMap&, const ScoreMap&) = default;
};

struct SoftLabelMap {
  ProposalGrid grid;
  std::vector<double> labels;

  friend bool operator==(const SoftLabelMap&, const SoftLabelMap&) = default;
};

struct LabelConfig {
  double mu_min = 0.3;
  double mu_max = 0.7;

  void validate() const;
};

/// Clip features, one row per clip (N×d).
class ClipFeatureSequence {
 public:
  ClipFeatureSequence() = default;
  explicit ClipFeatureSequence(DenseMatrix features);

  std::size_t n_clips() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }
  const DenseMatrix& features() const { return features_; }
  std::span<const double> clip(std::size_t i) const { return features_.row(i); }

  friend bool operator==(const ClipFeatureSequence&, const ClipFeatureSequence&) = default;

 private:
  DenseMatrix features_;
};

/// [a/N, (b+1)/N].
TemporalInterval interval_of(std::size_t a, std::size_t b, std::size_t n_clips);
inline TemporalInterval interval_of(const Cell& c, std::size_t n_clips) {
  return interval_of(c.a, c.b, n_clips);
}

double temporal_iou(const TemporalInterval& x, const TemporalInterval& y);

/// Piecewise-linear soft label from an IoU value.
double soft_label(double iou, const LabelConfig& cfg);

SoftLabelMap build_label_map(const TemporalInterval& gt, const ProposalGrid& grid,
                             const LabelConfig& cfg);

/// Mean of `samples` linearly interpolated clip vectors spread uniformly over
/// the continuous span [a, b+1). Clip i sits at i + 0.5; interpolation never
/// reaches outside clips a..b.
std::vector<double> bm_pool(const ClipFeatureSequence& clips, std::size_t a, std::size_t b,
                            std::size_t samples);

/// The same pooling for every cell of the grid expressed as a |C|×N weight
/// matrix, so pooled features are pooling_matrix · clips.
DenseMatrix pooling_matrix(const ProposalGrid& grid, std::size_t samples);

/// Values of the valid (upper-triangular) cells of an N×N matrix in grid order.
std::vector<double> flatten_valid(const DenseMatrix& square);
/// Inverse of flatten_valid; cells below the diagonal are zero.
DenseMatrix unflatten_valid(const ProposalGrid& grid, std::span<const double> flat);

}  // namespace twinloc
