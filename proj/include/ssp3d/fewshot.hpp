#pragma once

#include <set>
#include <string>
#include <vector>

#include "ssp3d/prototype.hpp"
#include "ssp3d/trainer.hpp"

namespace ssp3d {

// Few-shot transfer to a held-out category: k new prototypes are built from
// the shots' autoencoder latents and appended to the bank, then the
// generator is finetuned on the shots with the reconstruction loss only.
// Evaluation is restricted to novel-category test samples by the caller.
inline Checkpoint fewshot_finetune(const Checkpoint& base, const Manifest& manifest,
                                   const std::string& novel_category, const ParamStore& ae,
                                   PrototypeBank& bank, const TrainConfig& cfg,
                                   const std::string& run_dir = "") {
  cfg.validate();
  std::set<std::string> base_cats;
  for (const auto& e : bank.entries) base_cats.insert(e.category);
  if (base_cats.count(novel_category))
    throw ConfigError("fewshot_finetune: novel category '" + novel_category +
                      "' overlaps the base categories");

  std::vector<const SampleRec*> shots;
  for (const auto* s : manifest.by_split("labeled"))
    if (s->category == novel_category) shots.push_back(s);
  if (static_cast<int>(shots.size()) < cfg.fewshot_shots)
    throw DataError("fewshot_finetune: need " + std::to_string(cfg.fewshot_shots) +
                    " labeled novel pairs, found " + std::to_string(shots.size()));
  shots.resize(static_cast<std::size_t>(cfg.fewshot_shots));

  std::vector<BinaryVoxelGrid> shot_voxels;
  for (const auto* s : shots) shot_voxels.push_back(manifest.load_voxel(*s));
  auto protos = prototypes_for_category(ae, cfg.net, shot_voxels, cfg.k,
                                        splitmix64(cfg.seed) ^ fnv1a(novel_category),
                                        novel_category, cfg.delta);
  for (int c = 0; c < cfg.k; ++c)
    bank.entries.push_back({novel_category, c, protos[c]});
  bank.sort_canonical();
  bank.validate();

  ParamStore gen = base.extract_store("teacher");
  Adam opt(gen);
  Rng root(cfg.seed);

  const int n = static_cast<int>(shots.size());
  const int bs = std::min(cfg.batch_size, n);
  const int steps_per_epoch = (n + bs - 1) / bs;
  const std::int64_t total_steps = static_cast<std::int64_t>(cfg.fewshot_epochs) * steps_per_epoch;

  MetricLog log(run_dir.empty() ? "" : run_dir + "/fewshot_metrics.tsv",
                {"epoch", "step", "rec_loss", "lr"});

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.fewshot_epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng erng = root.fork("fewshot.epoch").fork(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int b0 = 0; b0 < n; b0 += bs, ++step) {
      const int cur = std::min(bs, n - b0);
      const double lr = cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
      Tape tape;
      BoundParams bp = bind(tape, gen);
      Var tokens = cfg.no_pam ? -1 : encode_prototypes(tape, bp, cfg.net, bank);
      Var loss = -1;
      for (int i = 0; i < cur; ++i) {
        const SampleRec& s = *shots[order[b0 + i]];
        Var pred = reconstruct(tape, bp, cfg.net, manifest.load_image(s), tokens, cfg.flags());
        Var l = bce_vs_target(tape, pred, tensor_from_voxel(shot_voxels[order[b0 + i]]));
        loss = loss < 0 ? l : tape.add(loss, l);
      }
      loss = tape.scale(loss, 1.0 / cur);
      const double lv = tape.val(loss).data[0];
      detail::check_finite(lv, "fewshot loss", step);
      tape.backward(loss);
      opt.step(gen, bp.grads(), lr);
      epoch_loss += lv;
      ++batches;
    }
    log.row({static_cast<double>(epoch), static_cast<double>(step), epoch_loss / batches,
             cosine_lr(step - 1, total_steps, cfg.lr_start, cfg.lr_end)});
  }
  log.flush();

  Checkpoint ck;
  ck.stage = "fewshot";
  ck.step = base.step + total_steps;
  ck.config_echo = cfg.echo().echo();
  ck.add_store("teacher", gen);
  ck.add_store("student", gen);
  ck.add_store("disc", base.extract_store("disc"));
  return ck;
}

}  // namespace ssp3d
