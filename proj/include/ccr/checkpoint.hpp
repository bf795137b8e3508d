#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ccr/tensor.hpp"

namespace ccr {

// Parameter checkpoint: magic, format version, a JSON metadata chunk, then
// named tensors. Dims are 64-bit little-endian unsigned, data 64-bit
// little-endian floats.
//
//   "CCRCKPT1" | u32 version | u64 meta_len | meta bytes |
//   u64 n_tensors | { u64 name_len | name | u64 ndim | u64 dims[] | f64 data[] }*
namespace ckpt {

inline constexpr char kMagic[8] = {'C', 'C', 'R', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) throw std::runtime_error(std::string("checkpoint truncated at ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    std::uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace ckpt

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string meta;  // JSON string; empty for plain tensor sets
  std::vector<NamedTensor> tensors;

  const Tensor& find(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.name == name) return nt.tensor;
    throw std::runtime_error("checkpoint: tensor '" + name + "' not found");
  }
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out;
  out.append(ckpt::kMagic, 8);
  ckpt::put_u32(out, ckpt::kVersion);
  ckpt::put_u64(out, c.meta.size());
  out += c.meta;
  ckpt::put_u64(out, c.tensors.size());
  for (const auto& nt : c.tensors) {
    ckpt::put_u64(out, nt.name.size());
    out += nt.name;
    ckpt::put_u64(out, static_cast<std::uint64_t>(nt.tensor.ndim()));
    for (int d = 0; d < nt.tensor.ndim(); ++d) ckpt::put_u64(out, static_cast<std::uint64_t>(nt.tensor.dim(d)));
    for (std::size_t i = 0; i < nt.tensor.size(); ++i) ckpt::put_f64(out, nt.tensor[i]);
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& buf) {
  ckpt::Reader r{buf};
  std::string magic = r.bytes(8, "magic");
  if (std::memcmp(magic.data(), ckpt::kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic, not a CCR checkpoint");
  }
  std::uint32_t version = r.u32("version");
  if (version != ckpt::kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint c;
  c.meta = r.bytes(r.u64("meta length"), "meta");
  std::uint64_t n = r.u64("tensor count");
  for (std::uint64_t t = 0; t < n; ++t) {
    NamedTensor nt;
    nt.name = r.bytes(r.u64("name length"), "name");
    std::uint64_t ndim = r.u64("ndim");
    std::vector<int> shape(ndim);
    for (std::uint64_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u64("dim"));
    Tensor tensor(shape);
    for (std::size_t i = 0; i < tensor.size(); ++i) tensor[i] = r.f64("data");
    nt.tensor = std::move(tensor);
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  std::string buf = serialize_checkpoint(c);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(buf);
}

}  // namespace ccr
