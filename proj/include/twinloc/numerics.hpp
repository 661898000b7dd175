#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace twinloc {

/// Raised when a caller breaks an operation's preconditions (shape mismatch,
/// out-of-range index, invalid configuration value).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf shows up where only finite values are allowed.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix of doubles. Vectors are 1×n or n×1 matrices or
/// plain spans, depending on what the call site needs.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// a·b.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ·b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a·bᵀ without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

/// y = xW + b, with b broadcast over the rows of x.
DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w, std::span<const double> b);

struct AffineGrads {
  DenseMatrix dx;
  DenseMatrix dw;
  std::vector<double> db;
};

AffineGrads affine_backward(const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& dy);

double sigmoid(double x);
DenseMatrix sigmoid(const DenseMatrix& x);
/// Given y = sigmoid(x) and dL/dy, returns dL/dx = y(1-y)·dL/dy.
DenseMatrix sigmoid_backward(const DenseMatrix& y, const DenseMatrix& dy);

inline constexpr double kBceClamp = 1e-7;

enum class Reduction { mean, sum };

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dp
};

/// Binary cross entropy with p clamped into [kBceClamp, 1 - kBceClamp].
/// Cells where the clamp is active receive zero gradient.
BceResult bce(std::span<const double> p, std::span<const double> gt,
              Reduction reduction = Reduction::mean);

struct ParamEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Ordered, name-addressable set of parameter arrays. Also used for
/// gradients (same layout, see zeros_like).
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  std::size_t add_zeros(std::string name, std::vector<std::size_t> shape);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t entry_count() const { return entries_.size(); }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  std::span<double> values(std::size_t i) { return entries_[i].values; }
  std::span<const double> values(std::size_t i) const { return entries_[i].values; }
  std::span<double> values(std::string_view name) { return values(index_of(name)); }
  std::span<const double> values(std::string_view name) const { return values(index_of(name)); }

  /// Copy of a rank-2 entry as a matrix (rank-1 entries become 1×n).
  DenseMatrix matrix(std::size_t i) const;

  std::size_t total_size() const;
  double flat(std::size_t k) const;
  void set_flat(std::size_t k, double value);
  /// Entry index owning flat coordinate k.
  std::size_t entry_of_flat(std::size_t k) const;

  ParamStore zeros_like() const;
  bool same_layout(const ParamStore& other) const;
  void fill(double value);
  /// this += scale * other (layouts must match).
  void axpy(double scale, const ParamStore& other);

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<ParamEntry> entries_;
};

bool operator==(const ParamEntry& a, const ParamEntry& b);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  AdamConfig config;

  static AdamState for_params(const ParamStore& params, AdamConfig config);
};

/// One bias-corrected Adam update. Throws NonFiniteError naming the first
/// parameter whose gradient is not finite; params and state are untouched
/// in that case.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  /// Worst relative error per parameter entry, in store order.
  std::vector<std::pair<std::string, double>> per_entry;
};

using ScalarLoss = std::function<double(const ParamStore&)>;

inline constexpr double kGradCheckStep = 1e-5;

/// Compares `analytic` against central differences of `loss_fn` around
/// `params`. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const ScalarLoss& loss_fn, const ParamStore& params,
                           const ParamStore& analytic, double h = kGradCheckStep);

}  // namespace twinloc
