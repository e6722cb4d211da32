#include <zlib.h>

#include <sstream>

#include "ctxdit/serialize.hpp"
#include "ctxdit/train.hpp"

namespace ctxdit::train {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t done = 0;
  while (done < n) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(n - done, 1u << 30));
    crc = crc32(crc, p + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json configs_json(const model::ModelConfig& m, const TrainConfig& t, const data::GenConfig& d) {
  return {{"model", model::to_json(m)}, {"train", to_json(t)}, {"data", data::to_json(d)}};
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, std::size_t limit) {
  auto n = read_u64(is);
  if (n > limit) throw FormatError("string length " + std::to_string(n) + " exceeds the container size");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(is.gcount()) != n) throw FormatError("truncated string");
  return s;
}

}  // namespace

std::uint64_t config_hash(const model::ModelConfig& m, const TrainConfig& t, const data::GenConfig& d) {
  auto j = configs_json(m, t, d);
  j["train"].erase("total_steps");
  return fnv1a(j.dump());
}

std::string serialize_checkpoint(const Checkpoint& c) {
  if (c.params.size() != c.adam.m.size() || c.params.size() != c.adam.v.size())
    throw ShapeError("checkpoint: parameter and optimizer state counts differ");
  std::ostringstream os;
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_u64(os, config_hash(c.model_config, c.train_config, c.data_config));
  write_string(os, configs_json(c.model_config, c.train_config, c.data_config).dump());
  write_u64(os, c.step);
  write_u64(os, c.rng.seed());
  write_u64(os, c.rng.position());
  write_u32(os, static_cast<std::uint32_t>(c.params.size()));
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    write_string(os, c.params[i].name);
    write_tensor(os, c.params[i].tensor);
    write_tensor(os, c.adam.m[i]);
    write_tensor(os, c.adam.v[i]);
  }
  std::string bytes = os.str();
  std::ostringstream footer;
  write_u32(footer, crc32_of(bytes, bytes.size()));
  return bytes + footer.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 4) throw FormatError("checkpoint: file too short");
  if (bytes.compare(0, sizeof kMagic, std::string(kMagic, sizeof kMagic)) != 0)
    throw FormatError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 4;
  {
    std::istringstream footer(bytes.substr(body));
    if (read_u32(footer) != crc32_of(bytes, body)) throw FormatError("checkpoint: CRC32 mismatch (file corrupt)");
  }
  std::istringstream is(bytes.substr(0, body));
  is.ignore(sizeof kMagic);
  auto version = read_u32(is);
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  auto hash = read_u64(is);
  Checkpoint c;
  try {
    auto j = json::parse(read_string(is, body));
    c.model_config = model::model_config_from_json(j.at("model"));
    c.train_config = train_config_from_json(j.at("train"));
    c.data_config = data::gen_config_from_json(j.at("data"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
  }
  if (hash != config_hash(c.model_config, c.train_config, c.data_config))
    throw FormatError("checkpoint: config hash mismatch");
  c.step = read_u64(is);
  auto seed = read_u64(is);
  auto pos = read_u64(is);
  c.rng = RngState(seed, pos);
  auto n = read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = read_string(is, body);
    c.params.push_back({name, read_tensor(is)});
    c.adam.m.push_back(read_tensor(is));
    c.adam.v.push_back(read_tensor(is));
    if (c.adam.m.back().shape() != c.params.back().tensor.shape() ||
        c.adam.v.back().shape() != c.params.back().tensor.shape())
      throw FormatError("checkpoint: optimizer state shape mismatch for " + name);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file(path.string(), serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto bytes = read_file(path.string());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ctxdit::train
