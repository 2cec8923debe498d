#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/tensor.hpp"

namespace ssp3d {

// Checkpoint container: named parameter groups plus a config echo, the
// global step and a stage tag.
//
// Binary layout (version 1, little-endian):
//   magic   "SSPC"            4 bytes
//   version u32
//   stage   u32 length + bytes
//   step    i64
//   config  u32 length + bytes (canonical "key = value" text)
//   count   u32                number of tensors
//   per tensor: name (u32 len + bytes), ndim u32, dims i32 each,
//               payload = numel float64
// Round-trips bit-exactly.
struct Checkpoint {
  std::string stage;  // warmup | mutual | fewshot | ae
  std::int64_t step = 0;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor>> groups;

  void add_store(const std::string& prefix, const ParamStore& p) {
    for (const auto& n : p.names()) groups.push_back({prefix + "." + n, p.at(n)});
  }

  ParamStore extract_store(const std::string& prefix) const {
    ParamStore p;
    const std::string pre = prefix + ".";
    for (const auto& [name, t] : groups)
      if (name.rfind(pre, 0) == 0) p.add(name.substr(pre.size()), t);
    if (p.size() == 0) throw DataError("checkpoint: no parameter group with prefix '" + prefix + "'");
    return p;
  }

  bool has_prefix(const std::string& prefix) const {
    const std::string pre = prefix + ".";
    for (const auto& [name, t] : groups)
      if (name.rfind(pre, 0) == 0) return true;
    return false;
  }
};

namespace detail {

inline void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_i64(std::ofstream& f, std::int64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_str(std::ofstream& f, const std::string& s) {
  put_u32(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4)) throw DataError("checkpoint: truncated u32");
  return v;
}
inline std::int64_t get_i64(std::ifstream& f) {
  std::int64_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 8)) throw DataError("checkpoint: truncated i64");
  return v;
}
inline std::string get_str(std::ifstream& f) {
  const std::uint32_t n = get_u32(f);
  std::string s(n, '\0');
  if (n && !f.read(s.data(), n)) throw DataError("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_checkpoint: cannot open " + path);
  f.write("SSPC", 4);
  detail::put_u32(f, 1);
  detail::put_str(f, c.stage);
  detail::put_i64(f, c.step);
  detail::put_str(f, c.config_echo);
  detail::put_u32(f, static_cast<std::uint32_t>(c.groups.size()));
  for (const auto& [name, t] : c.groups) {
    detail::put_str(f, name);
    detail::put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) {
      const std::int32_t dd = d;
      f.write(reinterpret_cast<const char*>(&dd), 4);
    }
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 8));
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "SSPC", 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path, 0);
  const std::uint32_t version = detail::get_u32(f);
  if (version != 1) throw FormatError("checkpoint: unsupported version", 4);
  Checkpoint c;
  c.stage = detail::get_str(f);
  c.step = detail::get_i64(f);
  c.config_echo = detail::get_str(f);
  const std::uint32_t count = detail::get_u32(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::get_str(f);
    const std::uint32_t ndim = detail::get_u32(f);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      std::int32_t dd = 0;
      if (!f.read(reinterpret_cast<char*>(&dd), 4)) throw DataError("checkpoint: truncated dims");
      d = dd;
    }
    Tensor t(shape);
    if (!f.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 8)))
      throw DataError("checkpoint: truncated tensor payload for " + name);
    c.groups.push_back({name, std::move(t)});
  }
  return c;
}

}  // namespace ssp3d
