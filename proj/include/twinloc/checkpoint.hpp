#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "twinloc/dataset_io.hpp"
#include "twinloc/numerics.hpp"

namespace twinloc {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointVersion;
  /// Snapshot of the experiment config that produced the parameters.
  nlohmann::json config;
  /// Training seed, epoch count and mode.
  nlohmann::json metadata;
  ParamStore params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Text header (magic and version, one-line config and metadata JSON, one
/// "name dims..." line per entry) followed by every value as a
/// little-endian IEEE-754 double, entries in header order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on a malformed payload or a version other than
/// kCheckpointVersion.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace twinloc
