#include "uni/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uni/rng.hpp"

namespace uni {

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'C', 'K', 'P', 'T', '\0'};

using nlohmann::json;

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32s(std::ostream& out, const std::vector<float>& v, uint64_t& h) {
  static_assert(sizeof(float) == 4);
  for (float x : v) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16),
                          static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
    h = fnv1a(b, 4, h);
  }
}

void read_f32s(std::istream& in, std::vector<float>& v, uint64_t& h) {
  for (float& x : v) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("checkpoint: truncated payload");
    h = fnv1a(b, 4, h);
    uint32_t bits = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
                    static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    std::memcpy(&x, &bits, 4);
  }
}

json header_json(const ParamStore<float>& store, const CheckpointMeta& meta) {
  json h;
  h["version"] = meta.version;
  h["config_hash"] = meta.config_hash;
  h["lineage"] = meta.lineage;
  h["vocab"] = meta.vocab;
  h["step_count"] = meta.step_count;
  json dir = json::array();
  for (const auto& p : store.params())
    dir.push_back({{"name", p.name}, {"group", p.group}, {"shape", p.shape}});
  h["tensors"] = dir;
  return h;
}

CheckpointMeta meta_from_json(const json& h) {
  CheckpointMeta m;
  m.version = h.at("version");
  m.config_hash = h.at("config_hash").get<uint64_t>();
  m.lineage = h.at("lineage").get<std::vector<std::string>>();
  m.vocab = h.at("vocab").get<std::vector<std::string>>();
  m.step_count = h.at("step_count").get<uint64_t>();
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  std::string header = header_json(store, meta).dump();
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : store.params()) {
    write_f32s(out, *p.val, h);
    write_f32s(out, p.m, h);
    write_f32s(out, p.v, h);
  }
  write_u64(out, h);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t hlen = read_u64(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  return meta_from_json(json::parse(header));
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint64_t hlen = read_u64(in);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  json h = json::parse(header);
  const json& dir = h.at("tensors");
  if (dir.size() != store.params().size())
    throw std::runtime_error("checkpoint: tensor count mismatch (" + std::to_string(dir.size()) +
                             " stored vs " + std::to_string(store.params().size()) +
                             " registered)");
  uint64_t hash = 0xcbf29ce484222325ull;
  for (const auto& entry : dir) {
    std::string name = entry.at("name");
    Shape shape = entry.at("shape").get<Shape>();
    if (!store.has(name)) throw std::runtime_error("checkpoint: unknown tensor " + name);
    auto& p = store.at(name);
    if (p.shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name + " (stored " +
                               shape_str(shape) + ", registered " + shape_str(p.shape) + ")");
    read_f32s(in, *p.val, hash);
    read_f32s(in, p.m, hash);
    read_f32s(in, p.v, hash);
  }
  uint64_t stored = read_u64(in);
  if (stored != hash) throw std::runtime_error("checkpoint: payload checksum mismatch");
  CheckpointMeta m = meta_from_json(h);
  store.step_count() = static_cast<int64_t>(m.step_count);
  return m;
}

}  // namespace uni
