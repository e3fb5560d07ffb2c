#pragma once
// Flat binary parameter container: magic + version header, named entries
// (name, shape, little-endian f32 payload), trailing FNV-1a64 checksum over
// the entry bytes. Model/schedule configuration rides along as reserved
// "config.*" scalar entries so load can reject mismatched architectures.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/core/optim.hpp"
#include "astrodiff/core/tensor.hpp"

namespace astrodiff::tg {

namespace ckpt_detail {

constexpr char kMagic[8] = {'A', 'D', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

inline void fnv1a_bytes(uint64_t& h, const void* p, size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
}

template <class T>
void put(std::string& buf, uint64_t& h, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
  fnv1a_bytes(h, tmp, sizeof(T));
}

template <class T>
T get(std::istream& in, uint64_t& h) {
  char tmp[sizeof(T)];
  if (!in.read(tmp, sizeof(T))) throw std::runtime_error("checkpoint: truncated file");
  fnv1a_bytes(h, tmp, sizeof(T));
  T v;
  std::memcpy(&v, tmp, sizeof(T));
  return v;
}

}  // namespace ckpt_detail

struct CheckpointEntry {
  std::vector<int> shape;
  std::vector<float> data;
};

using Checkpoint = std::map<std::string, CheckpointEntry>;

inline void checkpoint_add_scalar(Checkpoint& c, const std::string& name, float v) {
  c[name] = CheckpointEntry{{1}, {v}};
}

inline float checkpoint_scalar(const Checkpoint& c, const std::string& name) {
  auto it = c.find(name);
  if (it == c.end()) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
  if (it->second.data.size() != 1)
    throw std::runtime_error("checkpoint: entry '" + name + "' is not a scalar");
  return it->second.data[0];
}

inline void save_checkpoint(const std::string& path, const Checkpoint& entries) {
  using namespace ckpt_detail;
  std::string body;
  uint64_t h = 0xcbf29ce484222325ull;
  put(body, h, static_cast<uint64_t>(entries.size()));
  for (const auto& [name, e] : entries) {
    put(body, h, static_cast<uint32_t>(name.size()));
    body.append(name);
    fnv1a_bytes(h, name.data(), name.size());
    put(body, h, static_cast<uint32_t>(e.shape.size()));
    size_t n = 1;
    for (int d : e.shape) {
      put(body, h, static_cast<int32_t>(d));
      n *= static_cast<size_t>(d);
    }
    if (n != e.data.size())
      throw std::runtime_error("checkpoint: entry '" + name + "' shape/data mismatch");
    put(body, h, static_cast<uint64_t>(e.data.size() * sizeof(float)));
    const size_t off = body.size();
    body.resize(off + e.data.size() * sizeof(float));
    std::memcpy(body.data() + off, e.data.data(), e.data.size() * sizeof(float));
    fnv1a_bytes(h, body.data() + off, e.data.size() * sizeof(float));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  uint32_t ver = kVersion, reserved = 0;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&h), 8);
  if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' has wrong magic");
  uint32_t ver = 0, reserved = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  if (!in || ver != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ver));
  uint64_t h = 0xcbf29ce484222325ull;
  const uint64_t count = get<uint64_t>(in, h);
  Checkpoint out;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = get<uint32_t>(in, h);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated file");
    fnv1a_bytes(h, name.data(), name_len);
    const uint32_t ndim = get<uint32_t>(in, h);
    CheckpointEntry e;
    size_t n = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const int32_t ext = get<int32_t>(in, h);
      if (ext <= 0) throw std::runtime_error("checkpoint: bad extent in entry '" + name + "'");
      e.shape.push_back(ext);
      n *= static_cast<size_t>(ext);
    }
    const uint64_t nbytes = get<uint64_t>(in, h);
    if (nbytes != n * sizeof(float))
      throw std::runtime_error("checkpoint: payload size mismatch in entry '" + name + "'");
    e.data.resize(n);
    if (!in.read(reinterpret_cast<char*>(e.data.data()), static_cast<std::streamsize>(nbytes)))
      throw std::runtime_error("checkpoint: truncated file");
    fnv1a_bytes(h, e.data.data(), nbytes);
    out.emplace(std::move(name), std::move(e));
  }
  uint64_t stored = 0;
  if (!in.read(reinterpret_cast<char*>(&stored), 8))
    throw std::runtime_error("checkpoint: missing checksum");
  if (stored != h)
    throw std::runtime_error("checkpoint: checksum mismatch in '" + path + "' (corrupt file)");
  return out;
}

// Bridges between live parameters and the container.
template <class S>
Checkpoint checkpoint_from_params(const std::vector<Param<S>>& params) {
  Checkpoint c;
  for (const auto& p : params) {
    CheckpointEntry e;
    e.shape = p.tensor->shape;
    e.data.assign(p.tensor->data.begin(), p.tensor->data.end());
    c.emplace(p.name, std::move(e));
  }
  return c;
}

template <class S>
void checkpoint_into_params(const Checkpoint& c, std::vector<Param<S>>& params) {
  for (auto& p : params) {
    auto it = c.find(p.name);
    if (it == c.end()) throw std::runtime_error("checkpoint: missing parameter '" + p.name + "'");
    if (it->second.shape != p.tensor->shape)
      throw std::runtime_error("checkpoint: parameter '" + p.name + "' has shape " +
                               shape_str(it->second.shape) + ", expected " +
                               shape_str(p.tensor->shape));
    for (size_t i = 0; i < it->second.data.size(); ++i)
      p.tensor->data[i] = static_cast<S>(it->second.data[i]);
  }
}

}  // namespace astrodiff::tg
