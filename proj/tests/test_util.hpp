#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "ssp3d/ssp3d.hpp"

namespace ssp3d::testutil {

// Tiny architecture for gradient checks: r_v=8, C=32, D=16, 2 heads,
// under 5k generator parameters.
inline NetConfig tiny_net() {
  NetConfig n;
  n.rv = 8;
  n.image_size = 16;
  n.C = 32;
  n.D = 16;
  n.heads = 2;
  n.enc2d_ch = {3, 4};
  n.enc3d_ch = {2, 3};
  n.dec_c0 = 3;
  n.dec_ch = {2, 2};
  n.disc_ch = {2, 3};
  n.ae_latent = 8;
  n.ae_ch = {2, 3};
  return n;
}

inline TrainConfig tiny_train_cfg() {
  TrainConfig c;
  c.net = tiny_net();
  c.batch_size = 4;
  c.k = 2;
  c.warmup_epochs = 2;
  c.mutual_epochs = 2;
  c.ae_epochs = 2;
  c.fewshot_epochs = 2;
  c.fewshot_shots = 3;
  return c;
}

inline PrototypeBank tiny_bank(int rv, int k = 2, int categories = 2, std::uint64_t seed = 17) {
  PrototypeBank bank;
  bank.k = k;
  Rng rng(seed);
  for (int c = 0; c < categories; ++c)
    for (int j = 0; j < k; ++j) {
      BinaryVoxelGrid g(rv);
      for (auto& v : g.values) v = rng.uniform() < 0.3 ? 1 : 0;
      bank.entries.push_back({"cat" + std::to_string(c), j, g});
    }
  bank.sort_canonical();
  return bank;
}

inline Image random_image(int size, std::uint64_t seed) {
  Image img(size, size);
  Rng rng(seed);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform());
  return img;
}

// Micro on-disk dataset for end-to-end smoke and bitwise-identity runs.
inline Manifest micro_dataset(const std::string& dir, int per_cat_train = 6, int per_cat_test = 2,
                              double ratio = 0.5, int rv = 8, int image_size = 16,
                              std::uint64_t seed = 0) {
  DataConfig cfg;
  cfg.per_category_train = per_cat_train;
  cfg.per_category_test = per_cat_test;
  cfg.rv = rv;
  cfg.image_size = image_size;
  cfg.ratio = ratio;
  cfg.seed = seed;
  cfg.categories = {"block-stack", "tube"};
  std::filesystem::remove_all(dir);
  return build_dataset(cfg, dir);
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline bool stores_identical(const ParamStore& a, const ParamStore& b) {
  if (a.names() != b.names()) return false;
  for (const auto& n : a.names()) {
    if (a.at(n).shape != b.at(n).shape) return false;
    if (a.at(n).data != b.at(n).data) return false;  // exact, bitwise for finite doubles
  }
  return true;
}

}  // namespace ssp3d::testutil
