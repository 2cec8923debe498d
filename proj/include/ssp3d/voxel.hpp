#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "ssp3d/errors.hpp"

namespace ssp3d {

// Canonical layout everywhere: row-major (i, j, k) with k fastest.
struct ProbVoxelGrid {
  int resolution = 0;
  std::vector<float> values;  // each in [0,1], resolution^3 entries

  ProbVoxelGrid() = default;
  explicit ProbVoxelGrid(int r) : resolution(r) {
    values.assign(static_cast<std::size_t>(r) * r * r, 0.0f);
  }

  std::size_t numel() const { return values.size(); }

  float& at(int i, int j, int k) {
    return values[(static_cast<std::size_t>(i) * resolution + j) * resolution + k];
  }
  float at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(i) * resolution + j) * resolution + k];
  }

  void validate() const {
    const std::size_t expect = static_cast<std::size_t>(resolution) * resolution * resolution;
    if (resolution <= 0 || values.size() != expect)
      throw DataError("ProbVoxelGrid: element count does not match resolution^3");
    for (float v : values)
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("ProbVoxelGrid: value outside [0,1]");
  }
};

struct BinaryVoxelGrid {
  int resolution = 0;
  std::vector<std::uint8_t> values;  // each 0 or 1

  BinaryVoxelGrid() = default;
  explicit BinaryVoxelGrid(int r) : resolution(r) {
    values.assign(static_cast<std::size_t>(r) * r * r, 0);
  }

  std::size_t numel() const { return values.size(); }

  std::uint8_t& at(int i, int j, int k) {
    return values[(static_cast<std::size_t>(i) * resolution + j) * resolution + k];
  }
  std::uint8_t at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(i) * resolution + j) * resolution + k];
  }

  std::size_t count_occupied() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }

  void validate() const {
    const std::size_t expect = static_cast<std::size_t>(resolution) * resolution * resolution;
    if (resolution <= 0 || values.size() != expect)
      throw DataError("BinaryVoxelGrid: element count does not match resolution^3");
    for (auto v : values)
      if (v > 1) throw DataError("BinaryVoxelGrid: value not in {0,1}");
  }
};

inline BinaryVoxelGrid binarize(const ProbVoxelGrid& grid, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw ConfigError("binarize: threshold must lie in the open interval (0,1)");
  BinaryVoxelGrid out(grid.resolution);
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    out.values[i] = grid.values[i] > delta ? 1 : 0;  // strict inequality
  return out;
}

inline ProbVoxelGrid embed_as_prob(const BinaryVoxelGrid& grid) {
  ProbVoxelGrid out(grid.resolution);
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    out.values[i] = static_cast<float>(grid.values[i]);
  return out;
}

// Thresholded intersection-over-union; pred > t strictly. Empty union is
// defined as perfect agreement (1.0).
inline double iou(const ProbVoxelGrid& pred, const BinaryVoxelGrid& gt, double t) {
  if (pred.resolution != gt.resolution)
    throw DataError("iou: resolution mismatch (" + std::to_string(pred.resolution) + " vs " +
                    std::to_string(gt.resolution) + ")");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] > t;
    const bool g = gt.values[i] != 0;
    inter += (p && g);
    uni += (p || g);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ----- VOXL file format (bit-exact) -----
// ASCII header "VOXL1\n", "res <r>\n", "mode <prob|bin>\n", then r^3 values
// in canonical layout: prob = little-endian float32, bin = one byte 0x00/0x01.
// No trailing bytes.

using AnyVoxelGrid = std::variant<ProbVoxelGrid, BinaryVoxelGrid>;

namespace detail {

inline void write_exact(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline std::string read_line_at(const std::string& buf, std::size_t& pos, const char* what) {
  const std::size_t nl = buf.find('\n', pos);
  if (nl == std::string::npos) throw FormatError(std::string("VOXL: missing newline in ") + what, pos);
  std::string line = buf.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

}  // namespace detail

inline void write_voxl(const ProbVoxelGrid& g, const std::string& path) {
  g.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_voxl: cannot open " + path);
  f << "VOXL1\n" << "res " << g.resolution << "\n" << "mode prob\n";
  static_assert(sizeof(float) == 4);
  detail::write_exact(f, g.values.data(), g.values.size() * 4);
}

inline void write_voxl(const BinaryVoxelGrid& g, const std::string& path) {
  g.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_voxl: cannot open " + path);
  f << "VOXL1\n" << "res " << g.resolution << "\n" << "mode bin\n";
  detail::write_exact(f, g.values.data(), g.values.size());
}

inline AnyVoxelGrid read_voxl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_voxl: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (detail::read_line_at(buf, pos, "magic") != "VOXL1")
    throw FormatError("VOXL: bad magic", 0);
  const std::string res_line = detail::read_line_at(buf, pos, "res header");
  if (res_line.rfind("res ", 0) != 0) throw FormatError("VOXL: expected 'res <r>'", 6);
  const int r = std::stoi(res_line.substr(4));
  if (r <= 0) throw FormatError("VOXL: non-positive resolution", 6);
  const std::size_t mode_off = pos;
  const std::string mode_line = detail::read_line_at(buf, pos, "mode header");
  if (mode_line.rfind("mode ", 0) != 0) throw FormatError("VOXL: expected 'mode <prob|bin>'", mode_off);
  const std::string mode = mode_line.substr(5);
  const std::size_t n = static_cast<std::size_t>(r) * r * r;
  const std::size_t payload = buf.size() - pos;
  if (mode == "prob") {
    if (payload != n * 4)
      throw DataError("VOXL: payload length " + std::to_string(payload) + " != " +
                      std::to_string(n * 4) + " bytes for resolution " + std::to_string(r));
    ProbVoxelGrid g(r);
    std::memcpy(g.values.data(), buf.data() + pos, n * 4);
    g.validate();
    return g;
  }
  if (mode == "bin") {
    if (payload != n)
      throw DataError("VOXL: payload length " + std::to_string(payload) + " != " +
                      std::to_string(n) + " bytes for resolution " + std::to_string(r));
    BinaryVoxelGrid g(r);
    std::memcpy(g.values.data(), buf.data() + pos, n);
    g.validate();
    return g;
  }
  throw FormatError("VOXL: unknown mode '" + mode + "'", mode_off);
}

}  // namespace ssp3d
