#pragma once

#include <cstdint>
#include <vector>

#include "twinloc/proposal_map.hpp"

namespace twinloc {

/// Vocabulary id reserved for a masked query; its embedding is always zero.
inline constexpr std::uint32_t kNullToken = 0;

struct TokenSequence {
  std::vector<std::uint32_t> ids;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// One (video, query, annotation) record. concept_id is generator metadata
/// and is never read by the models; -1 when unknown.
struct GroundingSample {
  ClipFeatureSequence video;
  TokenSequence query;
  TemporalInterval gt;
  std::int64_t concept_id = -1;

  friend bool operator==(const GroundingSample&, const GroundingSample&) = default;
};

}  // namespace twinloc
