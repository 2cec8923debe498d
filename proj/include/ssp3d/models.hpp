#pragma once

#include <string>
#include <vector>

#include "ssp3d/autodiff.hpp"
#include "ssp3d/bank.hpp"
#include "ssp3d/errors.hpp"
#include "ssp3d/image.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

// Architecture sizes. All stride-2 stacks; decoder starts from a
// (rv >> dec_ch.size())^3 grid and doubles per stage.
struct NetConfig {
  int rv = 16;
  int image_size = 32;
  int C = 256;  // 2D query feature width
  int D = 128;  // prototype token width
  int heads = 2;
  std::vector<int> enc2d_ch{16, 32, 64, 128};
  std::vector<int> enc3d_ch{8, 16, 32};
  int dec_c0 = 128;
  std::vector<int> dec_ch{64, 32, 16};
  std::vector<int> disc_ch{8, 16, 32};
  int ae_latent = 128;
  std::vector<int> ae_ch{8, 16, 32};

  int dec_base_grid() const { return rv >> static_cast<int>(dec_ch.size()); }
  int enc3d_grid() const { return rv >> static_cast<int>(enc3d_ch.size()); }
  int disc_grid() const { return rv >> static_cast<int>(disc_ch.size()); }
  int enc2d_grid() const { return image_size >> static_cast<int>(enc2d_ch.size()); }
  int ae_grid() const { return rv >> static_cast<int>(ae_ch.size()); }

  void validate() const {
    if (D % heads != 0) throw ConfigError("NetConfig: head count must divide D");
    if (dec_base_grid() < 1 || enc3d_grid() < 1 || disc_grid() < 1 || enc2d_grid() < 1)
      throw ConfigError("NetConfig: too many stride-2 stages for the given resolution");
  }
};

struct AblationFlags {
  bool no_pam = false;
  bool average_fusion = false;
  // test hook: compute the attention prior, then multiply it by zero so the
  // decoder sees an exact zero prior while the attention graph still exists
  bool debug_zero_prior = false;
};

// ----- parameter construction -----

inline ParamStore init_generator(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore p;
  int ci = 1;
  for (std::size_t i = 0; i < cfg.enc2d_ch.size(); ++i) {
    add_conv2d(p, "enc2d.c" + std::to_string(i), cfg.enc2d_ch[i], ci, 3, rng);
    ci = cfg.enc2d_ch[i];
  }
  add_linear(p, "enc2d.fc", ci, cfg.C, rng);

  ci = 1;
  for (std::size_t i = 0; i < cfg.enc3d_ch.size(); ++i) {
    add_conv3d(p, "enc3d.c" + std::to_string(i), cfg.enc3d_ch[i], ci, 3, rng);
    ci = cfg.enc3d_ch[i];
  }
  const int g3 = cfg.enc3d_grid();
  add_linear(p, "enc3d.fc", ci * g3 * g3 * g3, cfg.D, rng);

  p.add("attn.wq", he_init({cfg.C, cfg.D}, rng));
  p.add("attn.wk", he_init({cfg.D, cfg.D}, rng));
  p.add("attn.wv", he_init({cfg.D, cfg.D}, rng));

  const int g0 = cfg.dec_base_grid();
  add_linear(p, "fuse.fc", cfg.C + cfg.D, cfg.dec_c0 * g0 * g0 * g0, rng);

  ci = cfg.dec_c0;
  for (std::size_t i = 0; i < cfg.dec_ch.size(); ++i) {
    add_convt3d(p, "dec.t" + std::to_string(i), ci, cfg.dec_ch[i], 4, rng);
    ci = cfg.dec_ch[i];
  }
  add_conv3d(p, "dec.out", 1, ci, 3, rng);
  return p;
}

inline ParamStore init_discriminator(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore p;
  int ci = 1;
  for (std::size_t i = 0; i < cfg.disc_ch.size(); ++i) {
    add_conv3d(p, "disc.c" + std::to_string(i), cfg.disc_ch[i], ci, 3, rng);
    ci = cfg.disc_ch[i];
  }
  const int g = cfg.disc_grid();
  add_linear(p, "disc.fc", ci * g * g * g, 1, rng);
  return p;
}

inline ParamStore init_autoencoder(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore p;
  int ci = 1;
  for (std::size_t i = 0; i < cfg.ae_ch.size(); ++i) {
    add_conv3d(p, "ae.enc.c" + std::to_string(i), cfg.ae_ch[i], ci, 3, rng);
    ci = cfg.ae_ch[i];
  }
  const int g = cfg.ae_grid();
  add_linear(p, "ae.enc.fc", ci * g * g * g, cfg.ae_latent, rng);
  add_linear(p, "ae.dec.fc", cfg.ae_latent, ci * g * g * g, rng);
  for (std::size_t i = 0; i < cfg.ae_ch.size(); ++i) {
    const int co = i + 1 < cfg.ae_ch.size() ? cfg.ae_ch[cfg.ae_ch.size() - 2 - i] : cfg.ae_ch[0];
    add_convt3d(p, "ae.dec.t" + std::to_string(i), ci, co, 4, rng);
    ci = co;
  }
  add_conv3d(p, "ae.dec.out", 1, ci, 3, rng);
  return p;
}

// ----- tensor bridges -----

inline Tensor tensor_from_image(const Image& img) {
  Tensor t({1, img.h, img.w});
  for (std::size_t i = 0; i < img.values.size(); ++i) t.data[i] = img.values[i];
  return t;
}

inline Tensor tensor_from_voxel(const BinaryVoxelGrid& g) {
  Tensor t({1, g.resolution, g.resolution, g.resolution});
  for (std::size_t i = 0; i < g.values.size(); ++i) t.data[i] = g.values[i];
  return t;
}

inline Tensor tensor_from_voxel(const ProbVoxelGrid& g) {
  Tensor t({1, g.resolution, g.resolution, g.resolution});
  for (std::size_t i = 0; i < g.values.size(); ++i) t.data[i] = g.values[i];
  return t;
}

inline ProbVoxelGrid prob_from_tensor(const Tensor& t, int rv) {
  if (t.numel() != static_cast<std::int64_t>(rv) * rv * rv)
    throw DataError("prob_from_tensor: element count mismatch");
  ProbVoxelGrid g(rv);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    double v = t.data[i];
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    g.values[i] = static_cast<float>(v);
  }
  return g;
}

// ----- forward passes -----

// image -> [1, C] query feature
inline Var encode_image(Tape& t, const BoundParams& bp, const NetConfig& cfg, const Image& img) {
  if (img.h != cfg.image_size || img.w != cfg.image_size)
    throw DataError("encode_image: image size " + std::to_string(img.h) + "x" +
                    std::to_string(img.w) + " does not match configured " +
                    std::to_string(cfg.image_size));
  Var x = t.leaf(tensor_from_image(img));
  for (std::size_t i = 0; i < cfg.enc2d_ch.size(); ++i)
    x = t.elu(t.conv2d(x, bp.v("enc2d.c" + std::to_string(i) + ".w"),
                       bp.v("enc2d.c" + std::to_string(i) + ".b"), 2, 1));
  x = t.mean_per_channel(x);
  x = t.reshape(x, {1, cfg.enc2d_ch.back()});
  return linear(t, x, bp, "enc2d.fc");
}

// one voxel grid -> [1, D] token
inline Var encode_voxel_token(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var x) {
  for (std::size_t i = 0; i < cfg.enc3d_ch.size(); ++i)
    x = t.elu(t.conv3d(x, bp.v("enc3d.c" + std::to_string(i) + ".w"),
                       bp.v("enc3d.c" + std::to_string(i) + ".b"), 2, 1));
  const int g = cfg.enc3d_grid();
  x = t.reshape(x, {1, cfg.enc3d_ch.back() * g * g * g});
  return linear(t, x, bp, "enc3d.fc");
}

// bank -> [n_p, D] key/value tokens in canonical bank order
inline Var encode_prototypes(Tape& t, const BoundParams& bp, const NetConfig& cfg,
                             const PrototypeBank& bank) {
  if (bank.entries.empty()) throw DataError("encode_prototypes: empty bank");
  Var flat = -1;
  for (const auto& e : bank.entries) {
    Var tok = encode_voxel_token(t, bp, cfg, t.leaf(tensor_from_voxel(e.voxel)));
    Var tok_flat = t.reshape(tok, {cfg.D});
    flat = flat < 0 ? tok_flat : t.concat_flat(flat, tok_flat);
  }
  return t.reshape(flat, {static_cast<int>(bank.entries.size()), cfg.D});
}

// Multi-head cross attention with a single query. query: [1, C],
// tokens: [n_p, D]; returns [1, D] prior feature.
inline Var attention_prior(Tape& t, Var query, Var tokens, Var wq, Var wk, Var wv, int heads) {
  const int d = t.val(wk).shape[1];
  if (d % heads != 0) throw ConfigError("attention_prior: head count must divide D");
  const int dh = d / heads;
  const int np = t.val(tokens).shape[0];
  Var q = t.matmul(query, wq);   // [1, D]
  Var k = t.matmul(tokens, wk);  // [np, D]
  Var v = t.matmul(tokens, wv);  // [np, D]
  Var out = -1;
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);          // [1, dh]
    Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);          // [np, dh]
    Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);          // [np, dh]
    Var scores = t.matmul(kh, t.reshape(qh, {dh, 1}));       // [np, 1]
    scores = t.scale(t.reshape(scores, {1, np}), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var w = t.softmax_rows(scores);                          // [1, np]
    Var oh = t.reshape(t.matmul(w, vh), {dh});               // [dh]
    out = out < 0 ? oh : t.concat_flat(out, oh);
  }
  return t.reshape(out, {1, d});
}

// Returns the per-head attention weight rows for property checks.
inline std::vector<Tensor> attention_weights(Tape& t, Var query, Var tokens, Var wq, Var wk,
                                             Var wv, int heads) {
  const int d = t.val(wk).shape[1];
  const int dh = d / heads;
  const int np = t.val(tokens).shape[0];
  Var q = t.matmul(query, wq);
  Var k = t.matmul(tokens, wk);
  std::vector<Tensor> rows;
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    Var scores = t.matmul(kh, t.reshape(qh, {dh, 1}));
    scores = t.scale(t.reshape(scores, {1, np}), 1.0 / std::sqrt(static_cast<double>(dh)));
    rows.push_back(t.val(t.softmax_rows(scores)));
  }
  return rows;
}

// Ablation "w average": mean of the value-projected tokens.
inline Var average_prior(Tape& t, Var tokens, Var wv) {
  const int np = t.val(tokens).shape[0];
  Var v = t.matmul(tokens, wv);  // [np, D]
  Tensor ones({1, np});
  for (auto& x : ones.data) x = 1.0 / np;
  return t.matmul(t.leaf(ones), v);  // [1, D]
}

// concat(query, prior) -> linear -> decoder input
inline Var fuse_features(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var query, Var prior) {
  Var q = t.reshape(query, {cfg.C});
  Var p = prior < 0 ? t.leaf(Tensor({cfg.D})) : t.reshape(prior, {cfg.D});
  Var fused = t.reshape(t.concat_flat(q, p), {1, cfg.C + cfg.D});
  return linear(t, fused, bp, "fuse.fc");
}

// fused feature -> [1, rv, rv, rv] probabilities, strictly inside (0,1)
inline Var decode_shape(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var fused) {
  const int g0 = cfg.dec_base_grid();
  Var x = t.reshape(fused, {cfg.dec_c0, g0, g0, g0});
  for (std::size_t i = 0; i < cfg.dec_ch.size(); ++i)
    x = t.elu(t.conv_transpose3d(x, bp.v("dec.t" + std::to_string(i) + ".w"),
                                 bp.v("dec.t" + std::to_string(i) + ".b"), 2, 1));
  x = t.conv3d(x, bp.v("dec.out.w"), bp.v("dec.out.b"), 1, 1);
  return t.sigmoid(x);
}

// Full generator: image + prototype tokens -> probability grid.
// tokens may be precomputed once per tape and shared across samples.
inline Var reconstruct(Tape& t, const BoundParams& bp, const NetConfig& cfg, const Image& img,
                       Var tokens, const AblationFlags& flags = {}) {
  Var query = encode_image(t, bp, cfg, img);
  Var prior = -1;
  if (!flags.no_pam) {
    prior = flags.average_fusion
                ? average_prior(t, tokens, bp.v("attn.wv"))
                : attention_prior(t, query, tokens, bp.v("attn.wq"), bp.v("attn.wk"),
                                  bp.v("attn.wv"), cfg.heads);
    if (flags.debug_zero_prior) prior = t.scale(prior, 0.0);
  }
  Var fused = fuse_features(t, bp, cfg, query, prior);
  return decode_shape(t, bp, cfg, fused);
}

// voxel grid -> sigmoid naturalness score, scalar [1]
inline Var discriminate(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var x) {
  const auto& s = t.val(x).shape;
  if (s.size() != 4 || s[1] != cfg.rv || s[2] != cfg.rv || s[3] != cfg.rv)
    throw DataError("discriminate: input resolution does not match configuration");
  for (std::size_t i = 0; i < cfg.disc_ch.size(); ++i)
    x = t.elu(t.conv3d(x, bp.v("disc.c" + std::to_string(i) + ".w"),
                       bp.v("disc.c" + std::to_string(i) + ".b"), 2, 1));
  const int g = cfg.disc_grid();
  x = t.reshape(x, {1, cfg.disc_ch.back() * g * g * g});
  x = linear(t, x, bp, "disc.fc");
  return t.sigmoid(t.reshape(x, {1}));
}

// ----- autoencoder -----

inline Var ae_encode(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var x) {
  for (std::size_t i = 0; i < cfg.ae_ch.size(); ++i)
    x = t.elu(t.conv3d(x, bp.v("ae.enc.c" + std::to_string(i) + ".w"),
                       bp.v("ae.enc.c" + std::to_string(i) + ".b"), 2, 1));
  const int g = cfg.ae_grid();
  x = t.reshape(x, {1, cfg.ae_ch.back() * g * g * g});
  return linear(t, x, bp, "ae.enc.fc");  // [1, L]
}

inline Var ae_decode(Tape& t, const BoundParams& bp, const NetConfig& cfg, Var latent) {
  const int g = cfg.ae_grid();
  Var x = linear(t, latent, bp, "ae.dec.fc");
  x = t.elu(x);
  x = t.reshape(x, {cfg.ae_ch.back(), g, g, g});
  for (std::size_t i = 0; i < cfg.ae_ch.size(); ++i)
    x = t.elu(t.conv_transpose3d(x, bp.v("ae.dec.t" + std::to_string(i) + ".w"),
                                 bp.v("ae.dec.t" + std::to_string(i) + ".b"), 2, 1));
  x = t.conv3d(x, bp.v("ae.dec.out.w"), bp.v("ae.dec.out.b"), 1, 1);
  return t.sigmoid(x);  // [1, rv, rv, rv]
}

}  // namespace ssp3d
