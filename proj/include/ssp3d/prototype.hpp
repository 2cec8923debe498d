#pragma once

#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ssp3d/adam.hpp"
#include "ssp3d/autodiff.hpp"
#include "ssp3d/bank.hpp"
#include "ssp3d/kmeans.hpp"
#include "ssp3d/models.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/synthdata.hpp"
#include "ssp3d/trainer.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

struct AETrainResult {
  ParamStore params;
  std::vector<double> epoch_loss;  // mean BCE reconstruction per epoch
};

// Shape autoencoder trained on the labeled voxels with mean BCE
// reconstruction. Deterministic given the seed.
inline AETrainResult train_autoencoder(const std::vector<std::pair<std::string, BinaryVoxelGrid>>& labeled_voxels,
                                       const TrainConfig& cfg) {
  if (labeled_voxels.empty()) throw DataError("train_autoencoder: no labeled voxels");
  std::map<std::string, int> per_cat;
  for (const auto& [cat, v] : labeled_voxels) per_cat[cat]++;
  for (const auto& [cat, n] : per_cat)
    if (n < cfg.k)
      throw DataError("train_autoencoder: category '" + cat + "' has " + std::to_string(n) +
                      " labeled shapes, fewer than k=" + std::to_string(cfg.k));

  Rng root(cfg.seed);
  Rng init_rng = root.fork("init.ae");
  ParamStore ae = init_autoencoder(cfg.net, init_rng);
  Adam opt(ae);

  const int n = static_cast<int>(labeled_voxels.size());
  const int bs = std::min(cfg.batch_size, n);
  const int steps_per_epoch = (n + bs - 1) / bs;
  const std::int64_t total_steps = static_cast<std::int64_t>(cfg.ae_epochs) * steps_per_epoch;

  AETrainResult res;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.ae_epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng erng = root.fork("ae.epoch").fork(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int b0 = 0; b0 < n; b0 += bs, ++step) {
      const int cur = std::min(bs, n - b0);
      Tape tape;
      BoundParams bp = bind(tape, ae);
      Var loss = -1;
      for (int i = 0; i < cur; ++i) {
        const Tensor x = tensor_from_voxel(labeled_voxels[order[b0 + i]].second);
        Var latent = ae_encode(tape, bp, cfg.net, tape.leaf(x));
        Var recon = ae_decode(tape, bp, cfg.net, latent);
        Var l = bce_vs_target(tape, recon, x);
        loss = loss < 0 ? l : tape.add(loss, l);
      }
      loss = tape.scale(loss, 1.0 / cur);
      const double lv = tape.val(loss).data[0];
      detail::check_finite(lv, "ae loss", step);
      tape.backward(loss);
      opt.step(ae, bp.grads(), cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end));
      epoch_loss += lv;
      ++batches;
    }
    res.epoch_loss.push_back(epoch_loss / batches);
  }
  res.params = std::move(ae);
  return res;
}

inline AETrainResult train_autoencoder(const Manifest& manifest, const TrainConfig& cfg) {
  std::vector<std::pair<std::string, BinaryVoxelGrid>> voxels;
  for (const auto* s : manifest.by_split("labeled"))
    voxels.push_back({s->category, manifest.load_voxel(*s)});
  return train_autoencoder(voxels, cfg);
}

inline std::vector<double> ae_latent(const ParamStore& ae, const NetConfig& net,
                                     const BinaryVoxelGrid& voxel) {
  Tape tape;
  BoundParams bp = bind(tape, ae);
  Var latent = ae_encode(tape, bp, net, tape.leaf(tensor_from_voxel(voxel)));
  return tape.val(latent).data;
}

inline ProbVoxelGrid ae_decode_latent(const ParamStore& ae, const NetConfig& net,
                                      const std::vector<double>& latent) {
  Tape tape;
  BoundParams bp = bind(tape, ae);
  Tensor l({1, net.ae_latent});
  if (static_cast<std::int64_t>(latent.size()) != l.numel())
    throw DataError("ae_decode_latent: latent dimension mismatch");
  l.data = latent;
  Var recon = ae_decode(tape, bp, net, tape.leaf(l));
  return prob_from_tensor(tape.val(recon), net.rv);
}

// Cluster one category's voxels in latent space and materialize the k
// centroids as prototype voxels. Empty decodes fall back to the labeled
// voxel nearest the centroid in latent space.
inline std::vector<BinaryVoxelGrid> prototypes_for_category(
    const ParamStore& ae, const NetConfig& net, const std::vector<BinaryVoxelGrid>& voxels, int k,
    std::uint64_t seed, const std::string& category, double delta = 0.3) {
  std::vector<std::vector<double>> latents;
  for (const auto& v : voxels) latents.push_back(ae_latent(ae, net, v));
  KMeansResult km = lloyd_kmeans(latents, k, seed);
  std::vector<BinaryVoxelGrid> out;
  for (int c = 0; c < k; ++c) {
    BinaryVoxelGrid proto = binarize(ae_decode_latent(ae, net, km.centers[c]), delta);
    if (proto.count_occupied() == 0) {
      // nearest labeled shape in latent space
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < latents.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < latents[i].size(); ++j) {
          const double x = latents[i][j] - km.centers[c][j];
          d += x * x;
        }
        if (d < bd) {
          bd = d;
          best = static_cast<int>(i);
        }
      }
      std::cerr << "build_prototypes: centroid " << c << " of '" << category
                << "' decoded empty; falling back to nearest labeled shape\n";
      proto = voxels[best];
    }
    out.push_back(std::move(proto));
  }
  return out;
}

// Per-category clustering of AE latents; centroids decoded through the AE
// decoder and binarized at delta. Canonical (category, cluster) order.
inline PrototypeBank build_prototype_bank(const Manifest& manifest, const ParamStore& ae,
                                          int k, std::uint64_t seed, const NetConfig& net,
                                          double delta = 0.3) {
  std::map<std::string, std::vector<BinaryVoxelGrid>> per_cat;
  for (const auto* s : manifest.by_split("labeled"))
    per_cat[s->category].push_back(manifest.load_voxel(*s));
  if (per_cat.empty()) throw DataError("build_prototype_bank: no labeled samples");
  PrototypeBank bank;
  bank.k = k;
  for (const auto& [cat, voxels] : per_cat) {
    if (static_cast<int>(voxels.size()) < k)
      throw DataError("build_prototype_bank: category '" + cat + "' has fewer than k shapes");
    auto protos = prototypes_for_category(ae, net, voxels, k, splitmix64(seed) ^ fnv1a(cat), cat,
                                          delta);
    for (int c = 0; c < k; ++c)
      bank.entries.push_back({cat, c, std::move(protos[c])});
  }
  bank.sort_canonical();
  bank.validate();
  return bank;
}

}  // namespace ssp3d
