#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinloc/grounding_sample.hpp"

namespace twinloc {

/// A file does not parse, or carries an unsupported format version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json sample_to_json(const GroundingSample& s);
GroundingSample sample_from_json(const nlohmann::json& j);

/// One JSON object per line: {video, tokens, gt, concept}.
void write_jsonl(std::ostream& os, const std::vector<GroundingSample>& ds);
std::vector<GroundingSample> read_jsonl(std::istream& is, const std::string& source = "<stream>");

void save_dataset(const std::filesystem::path& path, const std::vector<GroundingSample>& ds);
std::vector<GroundingSample> load_dataset(const std::filesystem::path& path);

/// Writes `contents` to `path` through a temporary sibling and a rename, so a
/// failed run never leaves a truncated file behind.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace twinloc
