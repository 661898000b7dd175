#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinloc/grounding_sample.hpp"

namespace twinloc {

/// One mode of the interval prior. Start and end are drawn independently as
/// center ∓ width/2 plus uniform noise in [-jitter, jitter].
struct IntervalComponent {
  double weight = 1.0;
  double center = 0.5;
  double width = 0.25;
  double jitter = 0.0;

  friend bool operator==(const IntervalComponent&, const IntervalComponent&) = default;
};

struct ScenarioSpec {
  std::size_t n_concepts = 20;
  double zipf_exponent = 1.0;
  std::vector<IntervalComponent> interval_prior;
  /// Probability that a sample's interval comes from its concept's component.
  double bias_strength = 0.9;
  /// concept -> index into interval_prior.
  std::vector<std::size_t> concept_interval_map;
  double noise_sigma = 0.5;
  std::size_t n_clips = 16;
  std::size_t dim = 32;
  std::size_t vocab_size = 64;
  std::uint64_t seed = 1;
  /// Seeds the per-concept signature vectors. Scenarios that should share
  /// a visual vocabulary must share this value.
  std::uint64_t signature_seed = 7;
  /// Filler tokens appended after the concept token.
  std::size_t query_distractors = 2;
  /// Events of other concepts planted in the video besides the queried one.
  std::size_t distractor_events = 1;

  void validate() const;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// Token id of concept c in generated queries.
inline std::uint32_t concept_token(std::size_t c) { return static_cast<std::uint32_t>(c + 1); }

/// Unit-norm signature per concept, n_concepts × dim.
DenseMatrix concept_signatures(const ScenarioSpec& spec);

/// n samples; sample i is drawn from its own stream derive_seed(spec.seed, i).
std::vector<GroundingSample> generate(const ScenarioSpec& spec, std::size_t n,
                                      std::size_t threads = 1);

struct ScenarioPair {
  std::vector<GroundingSample> train;
  std::vector<GroundingSample> cross_test;
  std::vector<GroundingSample> in_test;
};

/// Train and in-scenario test come from spec_train under disjoint seed
/// streams; cross-test comes from spec_test.
ScenarioPair cross_pair(const ScenarioSpec& spec_train, const ScenarioSpec& spec_test,
                        std::size_t n_train, std::size_t n_test, std::size_t n_intest,
                        std::size_t threads = 1);

/// Sum of elementwise minima of two histograms, each normalized to unit mass.
/// Two empty histograms give 1; one empty histogram gives 0.
double histogram_intersection(const std::vector<double>& x, const std::vector<double>& y);

struct BiasReport {
  std::size_t grid = 10;
  std::size_t n_samples = 0;
  /// Count per concept id.
  std::vector<std::size_t> concept_freq;
  /// G×G counts, row-major by (start bin, end bin); only start <= end is used.
  std::vector<std::size_t> interval_hist;
  std::vector<std::pair<std::size_t, std::size_t>> top_concepts;  // (concept, count)
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::size_t>> top_intervals;
  std::optional<double> overlap;

  nlohmann::json to_json() const;
  std::string concept_csv() const;
  std::string interval_csv() const;
};

/// (start bin, end bin) of an interval on a G-bin grid.
std::pair<std::size_t, std::size_t> interval_bins(const TemporalInterval& t, std::size_t grid);

std::vector<std::size_t> interval_histogram(const std::vector<GroundingSample>& ds,
                                            std::size_t grid);

BiasReport bias_report(const std::vector<GroundingSample>& ds,
                       const std::vector<GroundingSample>* other = nullptr, std::size_t grid = 10,
                       std::size_t top_k = 5);

}  // namespace twinloc
