#include "twinloc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace twinloc {

namespace {

std::string shape_string(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ContractViolation("DenseMatrix: " + std::to_string(values_.size()) +
                            " values for shape " + shape_string(rows_, cols_));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("DenseMatrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(values));
}

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: " + shape_string(a.rows(), a.cols()) + " by " +
                            shape_string(b.rows(), b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("matmul_tn: " + shape_string(a.rows(), a.cols()) + "^T by " +
                            shape_string(b.rows(), b.cols()));
  }
  DenseMatrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* src = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* dst = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aki * src[j];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul_nt: " + shape_string(a.rows(), a.cols()) + " by " +
                            shape_string(b.rows(), b.cols()) + "^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ai.size(); ++k) acc += ai[k] * bj[k];
      out(i, j) = acc;
    }
  }
  return out;
}

DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w, std::span<const double> b) {
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw ContractViolation("affine: x " + shape_string(x.rows(), x.cols()) + ", W " +
                            shape_string(w.rows(), w.cols()) + ", b " +
                            std::to_string(b.size()));
  }
  DenseMatrix y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  return y;
}

AffineGrads affine_backward(const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& dy) {
  if (dy.rows() != x.rows() || dy.cols() != w.cols() || x.cols() != w.rows()) {
    throw ContractViolation("affine_backward: shape mismatch");
  }
  AffineGrads g;
  g.dx = matmul_nt(dy, w);
  g.dw = matmul_tn(x, dy);
  g.db.assign(w.cols(), 0.0);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    const auto row = dy.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) g.db[j] += row[j];
  }
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DenseMatrix sigmoid(const DenseMatrix& x) {
  DenseMatrix y(x.rows(), x.cols());
  auto src = x.values();
  auto dst = y.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  return y;
}

DenseMatrix sigmoid_backward(const DenseMatrix& y, const DenseMatrix& dy) {
  if (y.rows() != dy.rows() || y.cols() != dy.cols()) {
    throw ContractViolation("sigmoid_backward: shape mismatch");
  }
  DenseMatrix dx(y.rows(), y.cols());
  auto yv = y.values();
  auto gv = dy.values();
  auto out = dx.values();
  for (std::size_t i = 0; i < yv.size(); ++i) out[i] = yv[i] * (1.0 - yv[i]) * gv[i];
  return dx;
}

BceResult bce(std::span<const double> p, std::span<const double> gt, Reduction reduction) {
  if (p.size() != gt.size()) {
    throw ContractViolation("bce: " + std::to_string(p.size()) + " scores vs " +
                            std::to_string(gt.size()) + " labels");
  }
  if (p.empty()) throw ContractViolation("bce: empty input");
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(p.size()) : 1.0;
  BceResult out;
  out.grad.assign(p.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
    const double g = gt[i];
    total -= g * std::log(pc) + (1.0 - g) * std::log(1.0 - pc);
    if (p[i] > kBceClamp && p[i] < 1.0 - kBceClamp) {
      out.grad[i] = scale * (-g / pc + (1.0 - g) / (1.0 - pc));
    }
  }
  out.loss = scale * total;
  return out;
}

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape,
                            std::vector<double> values) {
  if (contains(name)) throw ContractViolation("ParamStore: duplicate entry '" + name + "'");
  if (shape_product(shape) != values.size()) {
    throw ContractViolation("ParamStore: entry '" + name + "' has " +
                            std::to_string(values.size()) + " values for its shape");
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
  return entries_.size() - 1;
}

std::size_t ParamStore::add_zeros(std::string name, std::vector<std::size_t> shape) {
  const std::size_t n = shape_product(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, 0.0));
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ParamEntry& e) { return e.name == name; });
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ContractViolation("ParamStore: no entry named '" + std::string(name) + "'");
}

DenseMatrix ParamStore::matrix(std::size_t i) const {
  const auto& e = entries_.at(i);
  if (e.shape.size() == 1) return DenseMatrix(1, e.shape[0], e.values);
  if (e.shape.size() == 2) return DenseMatrix(e.shape[0], e.shape[1], e.values);
  throw ContractViolation("ParamStore: entry '" + e.name + "' is not rank 1 or 2");
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

std::size_t ParamStore::entry_of_flat(std::size_t k) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (k < entries_[i].values.size()) return i;
    k -= entries_[i].values.size();
  }
  throw ContractViolation("ParamStore: flat index out of range");
}

double ParamStore::flat(std::size_t k) const {
  for (const auto& e : entries_) {
    if (k < e.values.size()) return e.values[k];
    k -= e.values.size();
  }
  throw ContractViolation("ParamStore: flat index out of range");
}

void ParamStore::set_flat(std::size_t k, double value) {
  for (auto& e : entries_) {
    if (k < e.values.size()) {
      e.values[k] = value;
      return;
    }
    k -= e.values.size();
  }
  throw ContractViolation("ParamStore: flat index out of range");
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.entries_.push_back({e.name, e.shape, std::vector<double>(e.values.size(), 0.0)});
  }
  return out;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].shape != other.entries_[i].shape) {
      return false;
    }
  }
  return true;
}

void ParamStore::fill(double value) {
  for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), value);
}

void ParamStore::axpy(double scale, const ParamStore& other) {
  if (!same_layout(other)) throw ContractViolation("ParamStore::axpy: layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].values;
    const auto& src = other.entries_[i].values;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

bool operator==(const ParamEntry& a, const ParamEntry& b) {
  return a.name == b.name && a.shape == b.shape && a.values == b.values;
}

bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

AdamState AdamState::for_params(const ParamStore& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.values.size(), 0.0);
    s.v.emplace_back(e.values.size(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (!params.same_layout(grads)) throw ContractViolation("adam_step: gradient layout mismatch");
  if (state.m.size() != params.entry_count() || state.v.size() != params.entry_count()) {
    throw ContractViolation("adam_step: optimizer state does not mirror parameters");
  }
  for (std::size_t i = 0; i < grads.entry_count(); ++i) {
    const auto& g = grads.entry(i).values;
    if (state.m[i].size() != g.size() || state.v[i].size() != g.size()) {
      throw ContractViolation("adam_step: optimizer state does not mirror '" +
                              grads.entry(i).name + "'");
    }
    for (double x : g) {
      if (!std::isfinite(x)) {
        throw NonFiniteError("adam_step: non-finite gradient in '" + grads.entry(i).name + "'");
      }
    }
  }

  const auto& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.entry_count(); ++i) {
    auto w = params.values(i);
    const auto& g = grads.entry(i).values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

GradCheckReport grad_check(const ScalarLoss& loss_fn, const ParamStore& params,
                           const ParamStore& analytic, double h) {
  if (!params.same_layout(analytic)) {
    throw ContractViolation("grad_check: analytic gradient layout mismatch");
  }
  if (!(h > 0.0)) throw ContractViolation("grad_check: step must be positive");

  GradCheckReport report;
  for (const auto& e : params.entries()) report.per_entry.emplace_back(e.name, 0.0);

  ParamStore probe = params;
  const std::size_t n = params.total_size();
  std::size_t entry = 0;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    while (k - offset >= params.entry(entry).values.size()) {
      offset += params.entry(entry).values.size();
      ++entry;
    }
    const double x0 = params.flat(k);
    probe.set_flat(k, x0 + h);
    const double up = loss_fn(probe);
    probe.set_flat(k, x0 - h);
    const double down = loss_fn(probe);
    probe.set_flat(k, x0);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("grad_check: non-finite loss while probing '" +
                           params.entry(entry).name + "'");
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.flat(k);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    auto& worst = report.per_entry[entry].second;
    worst = std::max(worst, rel);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = k;
    }
  }
  return report;
}

}  // namespace twinloc
