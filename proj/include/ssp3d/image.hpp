#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"

namespace ssp3d {

// Single-channel image, values in [0,1], row-major.
struct Image {
  int h = 0, w = 0;
  std::vector<float> values;

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_) { values.assign(static_cast<std::size_t>(h) * w, 0.0f); }

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }

  void validate() const {
    if (h <= 0 || w <= 0 || values.size() != static_cast<std::size_t>(h) * w)
      throw DataError("Image: size mismatch");
    for (float v : values)
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("Image: value outside [0,1]");
  }
};

// IMGL1 format: "IMGL1\n", "size <h> <w>\n", little-endian float32 payload.
inline void write_imgl(const Image& img, const std::string& path) {
  img.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_imgl: cannot open " + path);
  f << "IMGL1\n" << "size " << img.h << " " << img.w << "\n";
  f.write(reinterpret_cast<const char*>(img.values.data()),
          static_cast<std::streamsize>(img.values.size() * 4));
}

inline Image read_imgl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_imgl: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = buf.find('\n');
  if (pos == std::string::npos || buf.substr(0, pos) != "IMGL1")
    throw FormatError("IMGL: bad magic", 0);
  const std::size_t hdr_start = pos + 1;
  const std::size_t nl = buf.find('\n', hdr_start);
  if (nl == std::string::npos) throw FormatError("IMGL: truncated size header", hdr_start);
  int h = 0, w = 0;
  if (std::sscanf(buf.substr(hdr_start, nl - hdr_start).c_str(), "size %d %d", &h, &w) != 2 ||
      h <= 0 || w <= 0)
    throw FormatError("IMGL: expected 'size <h> <w>'", hdr_start);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (buf.size() - (nl + 1) != n * 4)
    throw DataError("IMGL: payload length mismatch for " + std::to_string(h) + "x" + std::to_string(w));
  Image img(h, w);
  std::memcpy(img.values.data(), buf.data() + nl + 1, n * 4);
  return img;
}

}  // namespace ssp3d
