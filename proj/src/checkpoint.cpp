#include "twinloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace twinloc {

namespace {

constexpr const char* kMagic = "twinloc-checkpoint";

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return x;
}

std::string next_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string("checkpoint: missing ") + what);
  return line;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream os;
  os << kMagic << ' ' << ckpt.format_version << '\n';
  os << "config " << ckpt.config.dump() << '\n';
  os << "metadata " << ckpt.metadata.dump() << '\n';
  os << "entries " << ckpt.params.entry_count() << '\n';
  for (const auto& e : ckpt.params.entries()) {
    os << e.name << ' ' << e.shape.size();
    for (const auto d : e.shape) os << ' ' << d;
    os << '\n';
  }
  os << "data " << ckpt.params.total_size() << '\n';
  std::string out = os.str();
  for (const auto& e : ckpt.params.entries()) {
    for (const double v : e.values) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.append(buf, 8);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes);
  Checkpoint ckpt;

  std::istringstream head(next_line(in, "header"));
  std::string magic;
  head >> magic >> ckpt.format_version;
  if (magic != kMagic || !head) throw FormatError("checkpoint: not a twinloc checkpoint");
  if (ckpt.format_version != kCheckpointVersion) {
    throw FormatError("checkpoint: format version " + std::to_string(ckpt.format_version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  auto json_line = [&](const std::string& tag) {
    const std::string line = next_line(in, tag.c_str());
    if (line.rfind(tag + ' ', 0) != 0) throw FormatError("checkpoint: expected '" + tag + "' line");
    try {
      return nlohmann::json::parse(line.substr(tag.size() + 1));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("checkpoint: bad " + tag + " JSON: " + e.what());
    }
  };
  ckpt.config = json_line("config");
  ckpt.metadata = json_line("metadata");

  std::size_t count = 0;
  {
    std::istringstream ls(next_line(in, "entry count"));
    std::string tag;
    ls >> tag >> count;
    if (tag != "entries" || !ls) throw FormatError("checkpoint: expected 'entries' line");
  }
  struct Header {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t size = 1;
  };
  std::vector<Header> headers(count);
  std::size_t total = 0;
  for (auto& h : headers) {
    std::istringstream ls(next_line(in, "entry"));
    std::size_t rank = 0;
    ls >> h.name >> rank;
    h.shape.resize(rank);
    for (auto& d : h.shape) {
      ls >> d;
      h.size *= d;
    }
    if (!ls) throw FormatError("checkpoint: malformed entry line for '" + h.name + "'");
    total += h.size;
  }
  {
    std::istringstream ls(next_line(in, "data line"));
    std::string tag;
    std::size_t declared = 0;
    ls >> tag >> declared;
    if (tag != "data" || !ls || declared != total) {
      throw FormatError("checkpoint: data length does not match the entry shapes");
    }
  }

  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() - offset != total * 8) {
    throw FormatError("checkpoint: expected " + std::to_string(total * 8) + " data bytes, found " +
                      std::to_string(bytes.size() - offset));
  }
  std::size_t pos = offset;
  for (const auto& h : headers) {
    std::vector<double> values(h.size);
    for (auto& v : values) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + pos, 8);
      v = std::bit_cast<double>(to_little(bits));
      pos += 8;
    }
    ckpt.params.add(h.name, h.shape, std::move(values));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace twinloc
