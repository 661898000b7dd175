#include "twinloc/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "twinloc/parallel.hpp"
#include "twinloc/rng.hpp"

namespace twinloc {

void ScenarioSpec::validate() const {
  if (n_concepts == 0) throw ContractViolation("scenario: n_concepts must be >= 1");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) {
    throw ContractViolation("scenario: zipf_exponent must be >= 0");
  }
  if (interval_prior.empty()) throw ContractViolation("scenario: interval_prior is empty");
  double total = 0.0;
  for (const auto& c : interval_prior) {
    if (!(c.weight > 0.0)) throw ContractViolation("scenario: prior weights must be positive");
    if (!(c.width > 0.0) || !(c.jitter >= 0.0) || !std::isfinite(c.center)) {
      throw ContractViolation("scenario: prior component needs width > 0 and jitter >= 0");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation("scenario: prior weights must sum to 1 (got " + std::to_string(total) +
                            ")");
  }
  if (!(bias_strength >= 0.0 && bias_strength <= 1.0)) {
    throw ContractViolation("scenario: bias_strength must lie in [0, 1]");
  }
  if (concept_interval_map.size() != n_concepts) {
    throw ContractViolation("scenario: concept_interval_map needs one entry per concept");
  }
  for (const auto k : concept_interval_map) {
    if (k >= interval_prior.size()) {
      throw ContractViolation("scenario: concept_interval_map points past interval_prior");
    }
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ContractViolation("scenario: noise_sigma must be >= 0");
  }
  if (n_clips == 0 || dim == 0) throw ContractViolation("scenario: n_clips and dim must be >= 1");
  const std::size_t needed = n_concepts + 1 + (query_distractors > 0 ? 1 : 0);
  if (vocab_size < needed) {
    throw ContractViolation("scenario: vocab_size " + std::to_string(vocab_size) +
                            " too small for " + std::to_string(n_concepts) + " concepts");
  }
  if (distractor_events > 0 && n_concepts < 2) {
    throw ContractViolation("scenario: distractor events need at least 2 concepts");
  }
}

DenseMatrix concept_signatures(const ScenarioSpec& spec) {
  DenseMatrix sig(spec.n_concepts, spec.dim);
  for (std::size_t c = 0; c < spec.n_concepts; ++c) {
    std::mt19937_64 rng(derive_seed(spec.signature_seed, c));
    std::normal_distribution<double> g(0.0, 1.0);
    auto row = sig.row(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : row) {
        v = g(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& v : row) v /= norm;
  }
  return sig;
}

namespace {

constexpr int kMaxIntervalDraws = 10000;
constexpr int kMaxDistractorDraws = 20;

struct ClipSpan {
  std::size_t lo = 0;  // first clip
  std::size_t hi = 0;  // one past the last clip
};

// Draws from one component, clamps to [0, 1], snaps to the clip grid and
// rejects spans shorter than one clip.
ClipSpan draw_span(const IntervalComponent& comp, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double nd = static_cast<double>(n);
  for (int attempt = 0; attempt < kMaxIntervalDraws; ++attempt) {
    const double s = std::clamp(comp.center - comp.width / 2 + comp.jitter * u(rng), 0.0, 1.0);
    const double e = std::clamp(comp.center + comp.width / 2 + comp.jitter * u(rng), 0.0, 1.0);
    const auto lo = static_cast<long>(std::lround(s * nd));
    const auto hi = static_cast<long>(std::lround(e * nd));
    if (hi - lo >= 1) return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
  throw ContractViolation("scenario: interval component (center " + std::to_string(comp.center) +
                          ", width " + std::to_string(comp.width) +
                          ") cannot produce a span of at least one clip");
}

GroundingSample generate_one(const ScenarioSpec& spec, const DenseMatrix& sig,
                             const std::vector<double>& zipf_w, const std::vector<double>& mix_w,
                             std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  std::discrete_distribution<std::size_t> concept_dist(zipf_w.begin(), zipf_w.end());
  std::discrete_distribution<std::size_t> mixture(mix_w.begin(), mix_w.end());
  std::bernoulli_distribution biased(spec.bias_strength);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = spec.n_clips;
  const std::size_t c = concept_dist(rng);
  const std::size_t comp = biased(rng) ? spec.concept_interval_map[c] : mixture(rng);
  const ClipSpan gt = draw_span(spec.interval_prior[comp], n, rng);

  // Which concept occupies each clip; -1 for background.
  std::vector<long> owner(n, -1);
  for (std::size_t i = gt.lo; i < gt.hi; ++i) owner[i] = static_cast<long>(c);

  std::uniform_int_distribution<std::size_t> other(0, spec.n_concepts - 2);
  for (std::size_t k = 0; k < spec.distractor_events; ++k) {
    std::size_t d = other(rng);
    if (d >= c) ++d;
    for (int attempt = 0; attempt < kMaxDistractorDraws; ++attempt) {
      const ClipSpan span = draw_span(spec.interval_prior[mixture(rng)], n, rng);
      const bool free = std::all_of(owner.begin() + static_cast<long>(span.lo),
                                    owner.begin() + static_cast<long>(span.hi),
                                    [](long o) { return o < 0; });
      if (!free) continue;
      for (std::size_t i = span.lo; i < span.hi; ++i) owner[i] = static_cast<long>(d);
      break;
    }
  }

  DenseMatrix video(n, spec.dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = video.row(i);
    for (auto& v : row) v = spec.noise_sigma * noise(rng);
    if (owner[i] >= 0) {
      const auto s = sig.row(static_cast<std::size_t>(owner[i]));
      for (std::size_t j = 0; j < spec.dim; ++j) row[j] += s[j];
    }
  }

  TokenSequence query;
  query.ids.push_back(concept_token(c));
  if (spec.query_distractors > 0) {
    std::uniform_int_distribution<std::uint32_t> filler(
        static_cast<std::uint32_t>(spec.n_concepts + 1),
        static_cast<std::uint32_t>(spec.vocab_size - 1));
    for (std::size_t k = 0; k < spec.query_distractors; ++k) query.ids.push_back(filler(rng));
  }

  const double nd = static_cast<double>(n);
  return {ClipFeatureSequence(std::move(video)), std::move(query),
          TemporalInterval::make(static_cast<double>(gt.lo) / nd, static_cast<double>(gt.hi) / nd),
          static_cast<std::int64_t>(c)};
}

}  // namespace

std::vector<GroundingSample> generate(const ScenarioSpec& spec, std::size_t n,
                                      std::size_t threads) {
  spec.validate();
  if (n == 0) throw ContractViolation("generate: n must be >= 1");
  const DenseMatrix sig = concept_signatures(spec);
  std::vector<double> zipf_w(spec.n_concepts);
  for (std::size_t r = 0; r < spec.n_concepts; ++r) {
    zipf_w[r] = std::pow(static_cast<double>(r + 1), -spec.zipf_exponent);
  }
  std::vector<double> mix_w;
  for (const auto& comp : spec.interval_prior) mix_w.push_back(comp.weight);

  std::vector<GroundingSample> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    out[i] = generate_one(spec, sig, zipf_w, mix_w, derive_seed(spec.seed, i));
  });
  return out;
}

ScenarioPair cross_pair(const ScenarioSpec& spec_train, const ScenarioSpec& spec_test,
                        std::size_t n_train, std::size_t n_test, std::size_t n_intest,
                        std::size_t threads) {
  spec_train.validate();
  spec_test.validate();
  if (spec_train.n_clips != spec_test.n_clips || spec_train.dim != spec_test.dim ||
      spec_train.vocab_size != spec_test.vocab_size) {
    throw ContractViolation("cross_pair: scenarios disagree on n_clips, dim or vocab_size");
  }
  if (spec_train.n_concepts != spec_test.n_concepts ||
      spec_train.signature_seed != spec_test.signature_seed) {
    throw ContractViolation("cross_pair: scenarios must share concepts and signature_seed");
  }
  ScenarioSpec train = spec_train;
  ScenarioSpec in_test = spec_train;
  ScenarioSpec cross = spec_test;
  train.seed = derive_seed(spec_train.seed, 1);
  in_test.seed = derive_seed(spec_train.seed, 2);
  cross.seed = derive_seed(spec_test.seed, 3);
  return {generate(train, n_train, threads), generate(cross, n_test, threads),
          generate(in_test, n_intest, threads)};
}

double histogram_intersection(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractViolation("histogram_intersection: size mismatch");
  const double sx = std::accumulate(x.begin(), x.end(), 0.0);
  const double sy = std::accumulate(y.begin(), y.end(), 0.0);
  if (sx == 0.0 && sy == 0.0) return 1.0;
  if (sx == 0.0 || sy == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::min(x[i] / sx, y[i] / sy);
  return std::clamp(acc, 0.0, 1.0);
}

std::pair<std::size_t, std::size_t> interval_bins(const TemporalInterval& t, std::size_t grid) {
  const double g = static_cast<double>(grid);
  const auto last = grid - 1;
  const auto s = std::min(last, static_cast<std::size_t>(std::floor(t.start * g)));
  // The end bin is the one containing the last instant before t.end.
  const double e_raw = std::ceil(t.end * g) - 1.0;
  const auto e = std::min(last, static_cast<std::size_t>(std::max(0.0, e_raw)));
  return {s, std::max(s, e)};
}

std::vector<std::size_t> interval_histogram(const std::vector<GroundingSample>& ds,
                                            std::size_t grid) {
  std::vector<std::size_t> hist(grid * grid, 0);
  for (const auto& s : ds) {
    const auto [a, b] = interval_bins(s.gt, grid);
    ++hist[a * grid + b];
  }
  return hist;
}

namespace {

std::size_t concept_key(const GroundingSample& s) {
  if (s.concept_id >= 0) return static_cast<std::size_t>(s.concept_id);
  return s.query.ids.empty() ? 0 : s.query.ids.front();
}

std::vector<double> as_double(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

BiasReport bias_report(const std::vector<GroundingSample>& ds,
                       const std::vector<GroundingSample>* other, std::size_t grid,
                       std::size_t top_k) {
  if (grid < 2) throw ContractViolation("bias_report: grid must be >= 2");
  BiasReport r;
  r.grid = grid;
  r.n_samples = ds.size();
  for (const auto& s : ds) {
    const auto k = concept_key(s);
    if (k >= r.concept_freq.size()) r.concept_freq.resize(k + 1, 0);
    ++r.concept_freq[k];
  }
  r.interval_hist = interval_histogram(ds, grid);

  for (std::size_t c = 0; c < r.concept_freq.size(); ++c) {
    if (r.concept_freq[c] > 0) r.top_concepts.push_back({c, r.concept_freq[c]});
  }
  std::stable_sort(r.top_concepts.begin(), r.top_concepts.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (r.top_concepts.size() > top_k) r.top_concepts.resize(top_k);

  for (std::size_t a = 0; a < grid; ++a) {
    for (std::size_t b = a; b < grid; ++b) {
      if (const auto n = r.interval_hist[a * grid + b]; n > 0) r.top_intervals.push_back({{a, b}, n});
    }
  }
  std::stable_sort(r.top_intervals.begin(), r.top_intervals.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (r.top_intervals.size() > top_k) r.top_intervals.resize(top_k);

  if (other != nullptr) {
    r.overlap = histogram_intersection(as_double(r.interval_hist),
                                       as_double(interval_histogram(*other, grid)));
  }
  return r;
}

nlohmann::json BiasReport::to_json() const {
  nlohmann::json j;
  j["grid"] = grid;
  j["n_samples"] = n_samples;
  j["concept_freq"] = concept_freq;
  j["interval_hist"] = interval_hist;
  auto& tc = j["top_concepts"] = nlohmann::json::array();
  for (const auto& [c, n] : top_concepts) tc.push_back({{"concept", c}, {"count", n}});
  auto& ti = j["top_intervals"] = nlohmann::json::array();
  for (const auto& [bins, n] : top_intervals) {
    const double g = static_cast<double>(grid);
    ti.push_back({{"start_bin", bins.first},
                  {"end_bin", bins.second},
                  {"start", static_cast<double>(bins.first) / g},
                  {"end", static_cast<double>(bins.second + 1) / g},
                  {"count", n}});
  }
  j["overlap"] = overlap ? nlohmann::json(*overlap) : nlohmann::json(nullptr);
  return j;
}

std::string BiasReport::concept_csv() const {
  std::ostringstream os;
  os << "concept,count\n";
  for (std::size_t c = 0; c < concept_freq.size(); ++c) os << c << ',' << concept_freq[c] << '\n';
  return os.str();
}

std::string BiasReport::interval_csv() const {
  std::ostringstream os;
  os << "start_bin,end_bin,count\n";
  for (std::size_t a = 0; a < grid; ++a) {
    for (std::size_t b = a; b < grid; ++b) {
      os << a << ',' << b << ',' << interval_hist[a * grid + b] << '\n';
    }
  }
  return os.str();
}

}  // namespace twinloc
