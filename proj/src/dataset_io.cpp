#include "twinloc/dataset_io.hpp"

#include <fstream>
#include <sstream>

namespace twinloc {

nlohmann::json sample_to_json(const GroundingSample& s) {
  nlohmann::json video = nlohmann::json::array();
  for (std::size_t i = 0; i < s.video.n_clips(); ++i) {
    const auto row = s.video.clip(i);
    video.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"video", std::move(video)},
          {"tokens", s.query.ids},
          {"gt", {s.gt.start, s.gt.end}},
          {"concept", s.concept_id}};
}

GroundingSample sample_from_json(const nlohmann::json& j) {
  const auto& video = j.at("video");
  if (!video.is_array() || video.empty()) throw FormatError("'video' must be a non-empty array");
  const std::size_t n = video.size();
  const std::size_t d = video.front().size();
  DenseMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = video[i];
    if (!row.is_array() || row.size() != d) throw FormatError("'video' rows must share one length");
    for (std::size_t k = 0; k < d; ++k) m(i, k) = row[k].get<double>();
  }
  const auto& gt = j.at("gt");
  if (!gt.is_array() || gt.size() != 2) throw FormatError("'gt' must be [start, end]");
  GroundingSample s;
  s.video = ClipFeatureSequence(std::move(m));
  s.query.ids = j.at("tokens").get<std::vector<std::uint32_t>>();
  if (s.query.ids.empty()) throw FormatError("'tokens' must be non-empty");
  s.gt = TemporalInterval::make(gt[0].get<double>(), gt[1].get<double>());
  s.concept_id = j.value("concept", std::int64_t{-1});
  return s;
}

void write_jsonl(std::ostream& os, const std::vector<GroundingSample>& ds) {
  for (const auto& s : ds) os << sample_to_json(s).dump() << '\n';
}

std::vector<GroundingSample> read_jsonl(std::istream& is, const std::string& source) {
  std::vector<GroundingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<GroundingSample>& ds) {
  std::ostringstream os;
  write_jsonl(os, ds);
  write_file_atomic(path, os.str());
}

std::vector<GroundingSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_jsonl(in, path.string());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace twinloc
