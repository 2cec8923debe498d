#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"
#include "ssp3d/image.hpp"
#include "ssp3d/rng.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

inline const std::vector<std::string>& default_categories() {
  static const std::vector<std::string> cats{"block-stack", "tube", "slab-legs", "sphere-cap"};
  return cats;
}

// ----- procedural shape generators -----
// All geometry is expressed in normalized [0,1]^3 coordinates and rasterized
// onto the voxel grid. Every generator is a pure function of (category, seed,
// r_v) and produces occupancy fraction within [0.02, 0.6].

namespace detail {

inline void fill_box(BinaryVoxelGrid& g, double x0, double x1, double y0, double y1, double z0,
                     double z1) {
  const int r = g.resolution;
  const int ix0 = std::max(0, static_cast<int>(std::floor(x0 * r)));
  const int ix1 = std::min(r, static_cast<int>(std::ceil(x1 * r)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(y0 * r)));
  const int iy1 = std::min(r, static_cast<int>(std::ceil(y1 * r)));
  const int iz0 = std::max(0, static_cast<int>(std::floor(z0 * r)));
  const int iz1 = std::min(r, static_cast<int>(std::ceil(z1 * r)));
  for (int i = ix0; i < ix1; ++i)
    for (int j = iy0; j < iy1; ++j)
      for (int k = iz0; k < iz1; ++k) g.at(i, j, k) = 1;
}

inline void fill_tube_z(BinaryVoxelGrid& g, double cx, double cy, double router, double rinner,
                        double z0, double z1) {
  const int r = g.resolution;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      const double x = (i + 0.5) / r - cx;
      const double y = (j + 0.5) / r - cy;
      const double d = std::sqrt(x * x + y * y);
      if (d > router || d < rinner) continue;
      for (int k = std::max(0, static_cast<int>(std::floor(z0 * r)));
           k < std::min(r, static_cast<int>(std::ceil(z1 * r))); ++k)
        g.at(i, j, k) = 1;
    }
}

inline void fill_hemisphere(BinaryVoxelGrid& g, double cx, double cy, double cz, double rad) {
  const int r = g.resolution;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j)
      for (int k = 0; k < r; ++k) {
        const double x = (i + 0.5) / r - cx;
        const double y = (j + 0.5) / r - cy;
        const double z = (k + 0.5) / r - cz;
        if (z < 0.0) continue;
        if (x * x + y * y + z * z <= rad * rad) g.at(i, j, k) = 1;
      }
}

inline BinaryVoxelGrid generate_once(const std::string& category, Rng& rng, int rv) {
  BinaryVoxelGrid g(rv);
  if (category == "block-stack") {
    const int blocks = static_cast<int>(rng.randint(1, 3));
    double z = 0.08;
    for (int b = 0; b < blocks; ++b) {
      const double w = rng.uniform(0.25, 0.55);
      const double d = rng.uniform(0.25, 0.55);
      const double h = rng.uniform(0.12, 0.28);
      const double cx = 0.5 + rng.uniform(-0.05, 0.05);
      const double cy = 0.5 + rng.uniform(-0.05, 0.05);
      fill_box(g, cx - w / 2, cx + w / 2, cy - d / 2, cy + d / 2, z, std::min(0.95, z + h));
      z += h;
      if (z > 0.85) break;
    }
  } else if (category == "tube") {
    const double router = rng.uniform(0.24, 0.4);
    const double thick = rng.uniform(0.1, 0.18);
    const double h = rng.uniform(0.5, 0.85);
    fill_tube_z(g, 0.5, 0.5, router, std::max(0.05, router - thick), 0.08, 0.08 + h);
  } else if (category == "slab-legs") {
    const double half = rng.uniform(0.3, 0.44);
    const double slab_t = rng.uniform(0.08, 0.16);
    const double leg = rng.uniform(0.08, 0.14);
    const double top = rng.uniform(0.55, 0.8);
    const double inset = rng.uniform(0.02, 0.06);
    fill_box(g, 0.5 - half, 0.5 + half, 0.5 - half, 0.5 + half, top - slab_t, top);
    const double lo = 0.5 - half + inset;
    const double hi = 0.5 + half - inset - leg;
    for (double lx : {lo, hi})
      for (double ly : {lo, hi}) fill_box(g, lx, lx + leg, ly, ly + leg, 0.06, top - slab_t);
  } else if (category == "sphere-cap") {
    const double rad = rng.uniform(0.26, 0.42);
    const double base_half = rng.uniform(0.28, 0.45);
    const double base_t = rng.uniform(0.08, 0.16);
    fill_box(g, 0.5 - base_half, 0.5 + base_half, 0.5 - base_half, 0.5 + base_half, 0.06,
             0.06 + base_t);
    fill_hemisphere(g, 0.5, 0.5, 0.06 + base_t, rad);
  } else {
    std::string valid;
    for (const auto& c : default_categories()) valid += (valid.empty() ? "" : ", ") + c;
    throw ConfigError("generate_shape: unknown category '" + category + "' (valid: " + valid + ")");
  }
  return g;
}

}  // namespace detail

inline BinaryVoxelGrid generate_shape(const std::string& category, std::uint64_t seed, int rv) {
  if (rv < 4) throw ConfigError("generate_shape: resolution too small");
  Rng base(splitmix64(seed) ^ fnv1a(category));
  for (int attempt = 0; attempt < 16; ++attempt) {
    Rng rng = base.fork(static_cast<std::uint64_t>(attempt));
    BinaryVoxelGrid g = detail::generate_once(category, rng, rv);
    const double frac = static_cast<double>(g.count_occupied()) / static_cast<double>(g.numel());
    if (frac >= 0.02 && frac <= 0.6) return g;
  }
  throw NumericError("generate_shape: could not reach target occupancy for " + category);
}

// ----- orthographic depth renderer -----
// Exact voxel traversal (Amanatides-Woo). Pixel value is 1 - t_hit / (2 S)
// with S the view window extent, so hits are strictly positive and closer
// surfaces are brighter; pixels whose ray misses stay 0.

inline Image render_view(const BinaryVoxelGrid& voxel, double azimuth_deg, double elevation_deg,
                         int size) {
  if (size < 16) throw ConfigError("render_view: size must be >= 16");
  voxel.validate();
  const int r = voxel.resolution;
  const double az = azimuth_deg * M_PI / 180.0;
  const double el = elevation_deg * M_PI / 180.0;
  // Ray direction points into the scene.
  const double dir[3] = {-std::cos(el) * std::cos(az), -std::cos(el) * std::sin(az),
                         -std::sin(el)};
  const double right[3] = {-std::sin(az), std::cos(az), 0.0};
  const double up[3] = {dir[1] * right[2] - dir[2] * right[1],
                        dir[2] * right[0] - dir[0] * right[2],
                        dir[0] * right[1] - dir[1] * right[0]};
  const double S = 1.3 * r;
  const double c = r / 2.0;

  Image img(size, size);
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) {
      const double du = ((u + 0.5) / size - 0.5) * S;
      const double dv = ((v + 0.5) / size - 0.5) * S;
      double o[3];
      for (int a = 0; a < 3; ++a) o[a] = c + du * right[a] + dv * up[a] - S * dir[a];

      // Clip to the grid AABB [0, r]^3.
      double t0 = 0.0, t1 = 3.0 * S;
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (std::abs(dir[a]) < 1e-12) {
          if (o[a] < 0.0 || o[a] > r) miss = true;
        } else {
          double ta = (0.0 - o[a]) / dir[a];
          double tb = (r - o[a]) / dir[a];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
        }
      }
      if (miss || t0 > t1) continue;

      // DDA through voxels from the entry point.
      double p[3];
      for (int a = 0; a < 3; ++a) p[a] = o[a] + (t0 + 1e-9) * dir[a];
      int cell[3];
      for (int a = 0; a < 3; ++a)
        cell[a] = std::min(r - 1, std::max(0, static_cast<int>(std::floor(p[a]))));
      int step[3];
      double tmax[3], tdelta[3];
      for (int a = 0; a < 3; ++a) {
        if (dir[a] > 1e-12) {
          step[a] = 1;
          tmax[a] = t0 + (cell[a] + 1.0 - (o[a] + t0 * dir[a])) / dir[a];
          tdelta[a] = 1.0 / dir[a];
        } else if (dir[a] < -1e-12) {
          step[a] = -1;
          tmax[a] = t0 + (cell[a] - (o[a] + t0 * dir[a])) / dir[a];
          tdelta[a] = -1.0 / dir[a];
        } else {
          step[a] = 0;
          tmax[a] = 1e30;
          tdelta[a] = 1e30;
        }
      }
      double t_hit = -1.0;
      double t_cur = t0;
      while (t_cur <= t1 + 1e-9) {
        if (voxel.at(cell[0], cell[1], cell[2])) {
          t_hit = t_cur;
          break;
        }
        int axis = 0;
        if (tmax[1] < tmax[axis]) axis = 1;
        if (tmax[2] < tmax[axis]) axis = 2;
        t_cur = tmax[axis];
        cell[axis] += step[axis];
        if (cell[axis] < 0 || cell[axis] >= r) break;
        tmax[axis] += tdelta[axis];
      }
      if (t_hit >= 0.0) {
        double val = 1.0 - t_hit / (2.0 * S);
        if (val <= 0.0) val = 1e-4;
        if (val > 1.0) val = 1.0;
        img.at(v, u) = static_cast<float>(val);
      }
    }
  return img;
}

// ----- augmentations -----
// Photometric / occlusive only; pixel geometry of the object is never
// flipped, rotated or rescaled, so the voxel target stays valid.

inline Image weak_augment(const Image& img, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x3eaca001ULL));
  const double f = rng.uniform(0.95, 1.05);
  Image out = img;
  for (auto& v : out.values) {
    double x = v * f;
    v = static_cast<float>(std::min(1.0, std::max(0.0, x)));
  }
  return out;
}

struct CutoutRect {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

inline Image strong_augment(const Image& img, std::uint64_t seed, CutoutRect* rect_out = nullptr) {
  Rng rng(splitmix64(seed ^ 0x5717061ULL));
  const double f = rng.uniform(0.7, 1.3);
  Image out = img;
  for (auto& v : out.values) {
    double x = v * f + rng.normal(0.0, 0.05);
    v = static_cast<float>(std::min(1.0, std::max(0.0, x)));
  }
  // One cutout rectangle covering at most 25% of the pixels, filled with 0.
  const double wf = rng.uniform(0.1, 0.5);
  const double hf = rng.uniform(0.1, std::min(0.5, 0.25 / wf));
  const int cw = std::max(1, static_cast<int>(wf * img.w));
  const int ch = std::max(1, static_cast<int>(hf * img.h));
  const int x0 = static_cast<int>(rng.randint(0, img.w - cw));
  const int y0 = static_cast<int>(rng.randint(0, img.h - ch));
  for (int y = y0; y < y0 + ch; ++y)
    for (int x = x0; x < x0 + cw; ++x) out.at(y, x) = 0.0f;
  if (rect_out) *rect_out = CutoutRect{y0, x0, ch, cw};
  return out;
}

// ----- manifest -----

struct SampleRec {
  std::string id;
  std::string category;
  std::string split;  // labeled | unlabeled | test
  std::string image_path;
  std::string voxel_path;
  double azimuth = 0.0;
  double elevation = 0.0;
};

struct Manifest {
  std::string base_dir;
  std::vector<SampleRec> samples;

  std::vector<const SampleRec*> by_split(const std::string& split) const {
    std::vector<const SampleRec*> out;
    for (const auto& s : samples)
      if (s.split == split) out.push_back(&s);
    return out;
  }

  Image load_image(const SampleRec& s) const { return read_imgl(base_dir + "/" + s.image_path); }

  BinaryVoxelGrid load_voxel(const SampleRec& s) const {
    auto g = read_voxl(base_dir + "/" + s.voxel_path);
    if (!std::holds_alternative<BinaryVoxelGrid>(g))
      throw DataError("manifest: ground-truth voxel is not binary: " + s.voxel_path);
    return std::get<BinaryVoxelGrid>(g);
  }
};

inline void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("save_manifest: cannot open " + path);
  for (const auto& s : m.samples) {
    std::ostringstream line;
    line.precision(17);  // exact double round trip
    line << s.id << "\t" << s.category << "\t" << s.split << "\t" << s.image_path << "\t"
         << s.voxel_path << "\t" << s.azimuth << "\t" << s.elevation;
    f << line.str() << "\n";
  }
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_manifest: cannot open " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  if (m.base_dir.empty()) m.base_dir = ".";
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    SampleRec s;
    std::string az, el;
    if (!std::getline(ss, s.id, '\t') || !std::getline(ss, s.category, '\t') ||
        !std::getline(ss, s.split, '\t') || !std::getline(ss, s.image_path, '\t') ||
        !std::getline(ss, s.voxel_path, '\t') || !std::getline(ss, az, '\t') ||
        !std::getline(ss, el, '\t'))
      throw DataError("load_manifest: malformed line: " + line);
    s.azimuth = std::stod(az);
    s.elevation = std::stod(el);
    m.samples.push_back(std::move(s));
  }
  return m;
}

// ----- dataset build -----

struct DataConfig {
  std::vector<std::string> categories = default_categories();
  int per_category_train = 100;
  int per_category_test = 20;
  int rv = 16;
  int image_size = 32;
  double ratio = 0.1;
  std::uint64_t seed = 0;
};

inline Manifest build_dataset(const DataConfig& cfg, const std::string& out_dir) {
  if (!(cfg.ratio > 0.0 && cfg.ratio <= 1.0))
    throw ConfigError("build_dataset: ratio must lie in (0, 1]");
  if (cfg.per_category_train <= 0 || cfg.per_category_test < 0)
    throw ConfigError("build_dataset: non-positive sample counts");
  std::filesystem::create_directories(out_dir + "/images");
  std::filesystem::create_directories(out_dir + "/voxels");

  Rng master(cfg.seed);
  Manifest m;
  m.base_dir = out_dir;

  struct Pending {
    std::string id, category;
    bool is_test;
  };
  std::vector<Pending> pending;
  for (const auto& cat : cfg.categories) {
    for (int i = 0; i < cfg.per_category_train; ++i)
      pending.push_back({cat + "-" + std::to_string(i), cat, false});
    for (int i = 0; i < cfg.per_category_test; ++i)
      pending.push_back({cat + "-t" + std::to_string(i), cat, true});
  }

  // Stratified labeled split with largest-remainder rounding so that the
  // global labeled count equals round(ratio * N_train) exactly.
  const std::int64_t n_train =
      static_cast<std::int64_t>(cfg.categories.size()) * cfg.per_category_train;
  const std::int64_t target = std::llround(cfg.ratio * static_cast<double>(n_train));
  std::map<std::string, std::vector<std::string>> train_ids;
  for (const auto& p : pending)
    if (!p.is_test) train_ids[p.category].push_back(p.id);
  std::map<std::string, std::int64_t> labeled_quota;
  {
    std::vector<std::pair<double, std::string>> rema;
    std::int64_t assigned = 0;
    for (const auto& cat : cfg.categories) {
      const double exact = cfg.ratio * static_cast<double>(train_ids[cat].size());
      const std::int64_t base = static_cast<std::int64_t>(std::floor(exact));
      labeled_quota[cat] = base;
      assigned += base;
      rema.push_back({exact - base, cat});
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < target && i < rema.size(); ++i, ++assigned)
      labeled_quota[rema[i].second]++;
  }
  std::map<std::string, std::vector<std::string>> labeled_set;
  for (const auto& cat : cfg.categories) {
    auto ids = train_ids[cat];
    Rng split_rng = master.fork("split").fork(cat);
    split_rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(std::min<std::int64_t>(
        labeled_quota[cat], static_cast<std::int64_t>(ids.size()))));
    labeled_set[cat] = ids;
  }

  for (const auto& p : pending) {
    Rng srng = master.fork("sample").fork(p.id);
    SampleRec rec;
    rec.id = p.id;
    rec.category = p.category;
    if (p.is_test)
      rec.split = "test";
    else {
      const auto& lab = labeled_set[p.category];
      rec.split = std::find(lab.begin(), lab.end(), p.id) != lab.end() ? "labeled" : "unlabeled";
    }
    const std::uint64_t shape_seed = srng.fork("shape").next_u64();
    BinaryVoxelGrid voxel = generate_shape(p.category, shape_seed, cfg.rv);
    if (voxel.count_occupied() == 0) throw NumericError("build_dataset: empty shape " + p.id);
    Rng view_rng = srng.fork("view");
    rec.azimuth = view_rng.uniform(0.0, 360.0);
    rec.elevation = view_rng.uniform(15.0, 45.0);
    Image img = render_view(voxel, rec.azimuth, rec.elevation, cfg.image_size);
    rec.voxel_path = "voxels/" + p.id + ".voxl";
    rec.image_path = "images/" + p.id + ".imgl";
    write_voxl(voxel, out_dir + "/" + rec.voxel_path);
    write_imgl(img, out_dir + "/" + rec.image_path);
    m.samples.push_back(std::move(rec));
  }

  std::stable_sort(m.samples.begin(), m.samples.end(),
                   [](const SampleRec& a, const SampleRec& b) { return a.id < b.id; });
  save_manifest(m, out_dir + "/manifest.tsv");
  return m;
}

}  // namespace ssp3d
