#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ssp3d/adam.hpp"
#include "ssp3d/autodiff.hpp"
#include "ssp3d/bank.hpp"
#include "ssp3d/checkpoint.hpp"
#include "ssp3d/config.hpp"
#include "ssp3d/errors.hpp"
#include "ssp3d/kmeans.hpp"
#include "ssp3d/models.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/synthdata.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

// ----- scalar loss functions (grid domain) -----

constexpr double kBceEps = 1e-7;

// Mean binary cross entropy over voxels; predictions clamped to
// [eps, 1-eps] so exact 0/1 entries stay finite.
inline double rec_loss(const ProbVoxelGrid& pred, const BinaryVoxelGrid& gt) {
  if (pred.resolution != gt.resolution) throw DataError("rec_loss: resolution mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    double p = pred.values[i];
    if (p < kBceEps) p = kBceEps;
    if (p > 1.0 - kBceEps) p = 1.0 - kBceEps;
    acc += gt.values[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -acc / static_cast<double>(pred.values.size());
}

// Confidence-weighted Brier terms: sum_i score_i * mean_voxels((pred-pseudo)^2).
// Scores enter as constants.
inline double unsup_loss(const std::vector<ProbVoxelGrid>& preds,
                         const std::vector<BinaryVoxelGrid>& pseudo,
                         const std::vector<double>& scores) {
  if (preds.size() != pseudo.size() || preds.size() != scores.size())
    throw DataError("unsup_loss: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].resolution != pseudo[i].resolution)
      throw DataError("unsup_loss: resolution mismatch at sample " + std::to_string(i));
    double acc = 0.0;
    for (std::size_t v = 0; v < preds[i].values.size(); ++v) {
      const double d = static_cast<double>(preds[i].values[v]) - pseudo[i].values[v];
      acc += d * d;
    }
    total += scores[i] * acc / static_cast<double>(preds[i].values.size());
  }
  return total;
}

// ----- tape losses -----

inline Var bce_vs_target(Tape& t, Var pred, const Tensor& gt) {
  Var pc = t.clamp(pred, kBceEps, 1.0 - kBceEps);
  Tensor inv = gt;
  for (auto& x : inv.data) x = 1.0 - x;
  Var pos = t.mul(t.leaf(gt), t.log_clamped(pc));
  Var neg = t.mul(t.leaf(inv), t.log_clamped(t.add_const(t.scale(pc, -1.0), 1.0)));
  return t.scale(t.mean_all(t.add(pos, neg)), -1.0);
}

inline Var brier_vs_target(Tape& t, Var pred, const Tensor& target) {
  Var d = t.sub(pred, t.leaf(target));
  return t.mean_all(t.mul(d, d));
}

// ----- EMA teacher refinement -----

// alpha(step) climbs from alpha0 at step 0 to exactly 1 at total_steps.
inline double cosine_alpha(std::int64_t step, std::int64_t total_steps, double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 < 1.0) && alpha0 != 1.0)
    throw ConfigError("cosine_alpha: alpha0 must lie in (0,1]");
  if (step < 0 || step > total_steps) throw ConfigError("cosine_alpha: step out of range");
  if (total_steps == 0) return 1.0;
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - alpha0) * 0.5 * (1.0 + std::cos(M_PI * x));
}

inline void ema_update(ParamStore& teacher, const ParamStore& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("ema_update: alpha outside [0,1]");
  if (alpha == 1.0) return;  // exact fixed point
  for (const auto& n : teacher.names()) {
    Tensor& t = teacher.at(n);
    if (!student.has(n)) throw DataError("ema_update: student missing leaf " + n);
    const Tensor& s = student.at(n);
    if (t.shape != s.shape) throw DataError("ema_update: shape mismatch at leaf " + n);
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = alpha * t.data[i] + (1.0 - alpha) * s.data[i];
  }
}

// ----- training configuration -----

struct TrainConfig {
  int batch_size = 32;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  double lambda_d = 1e-3;
  double lambda_u = 5.0;
  double delta = 0.3;       // pseudo-label binarization threshold
  double iou_threshold = 0.3;
  double alpha0 = 0.9996;
  int k = 3;
  int warmup_epochs = 40;   // desk-scale defaults; paper-scale 250/100 selectable
  int mutual_epochs = 20;
  int ae_epochs = 30;
  int fewshot_epochs = 30;
  int fewshot_shots = 10;
  std::uint64_t seed = 0;

  // ablation switches
  bool no_pam = false;
  bool average_fusion = false;
  bool no_snm = false;
  bool no_score = false;
  std::string unsup_kind = "l2";  // l2 | bce
  // test hooks: compute scores normally then overwrite each with 1.0, or
  // compute the attention prior then zero it before fusion
  bool debug_inject_unit_scores = false;
  bool debug_zero_prior = false;

  NetConfig net;

  static TrainConfig from_config(const Config& c) {
    TrainConfig t;
    t.batch_size = static_cast<int>(c.get_int("batch_size", t.batch_size));
    t.lr_start = c.get_double("lr_start", t.lr_start);
    t.lr_end = c.get_double("lr_end", t.lr_end);
    t.lambda_d = c.get_double("lambda_d", t.lambda_d);
    t.lambda_u = c.get_double("lambda_u", t.lambda_u);
    t.delta = c.get_double("delta", t.delta);
    t.iou_threshold = c.get_double("iou_threshold", t.iou_threshold);
    t.alpha0 = c.get_double("alpha0", t.alpha0);
    t.k = static_cast<int>(c.get_int("k", t.k));
    t.warmup_epochs = static_cast<int>(c.get_int("warmup_epochs", t.warmup_epochs));
    t.mutual_epochs = static_cast<int>(c.get_int("mutual_epochs", t.mutual_epochs));
    t.ae_epochs = static_cast<int>(c.get_int("ae_epochs", t.ae_epochs));
    t.fewshot_epochs = static_cast<int>(c.get_int("fewshot_epochs", t.fewshot_epochs));
    t.fewshot_shots = static_cast<int>(c.get_int("fewshot_shots", t.fewshot_shots));
    t.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    t.no_pam = c.get_bool("no_pam", false);
    t.average_fusion = c.get("fusion", "mha") == "average";
    t.no_snm = c.get_bool("no_snm", false);
    t.no_score = c.get_bool("no_score", false);
    t.unsup_kind = c.get("unsup_loss", "l2");
    if (t.unsup_kind != "l2" && t.unsup_kind != "bce")
      throw ConfigError("config: unsup_loss must be 'l2' or 'bce'");
    t.net.rv = static_cast<int>(c.get_int("rv", t.net.rv));
    t.net.image_size = static_cast<int>(c.get_int("image_size", t.net.image_size));
    t.net.C = static_cast<int>(c.get_int("feat2d_dim", t.net.C));
    t.net.D = static_cast<int>(c.get_int("feat3d_dim", t.net.D));
    t.net.heads = static_cast<int>(c.get_int("heads", t.net.heads));
    auto chans = [&c](const std::string& key, std::vector<int> def) {
      if (!c.has(key)) return def;
      std::vector<int> out;
      std::istringstream ss(c.get(key, ""));
      std::string tok;
      while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
      if (out.empty()) throw ConfigError("config: empty channel list for " + key);
      return out;
    };
    t.net.enc2d_ch = chans("enc2d_channels", t.net.enc2d_ch);
    t.net.enc3d_ch = chans("enc3d_channels", t.net.enc3d_ch);
    t.net.dec_ch = chans("dec_channels", t.net.dec_ch);
    t.net.dec_c0 = static_cast<int>(c.get_int("dec_base_channels", t.net.dec_c0));
    t.net.disc_ch = chans("disc_channels", t.net.disc_ch);
    t.net.ae_ch = chans("ae_channels", t.net.ae_ch);
    t.net.ae_latent = static_cast<int>(c.get_int("ae_latent", t.net.ae_latent));
    t.validate();
    return t;
  }

  void validate() const {
    if (batch_size <= 0 || warmup_epochs < 0 || mutual_epochs < 0)
      throw ConfigError("TrainConfig: non-positive sizes");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("TrainConfig: delta outside (0,1)");
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
      throw ConfigError("TrainConfig: iou threshold outside (0,1)");
    if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw ConfigError("TrainConfig: alpha0 outside (0,1]");
    if (lr_start <= 0.0 || lr_end <= 0.0 || lambda_u < 0.0 || lambda_d < 0.0)
      throw ConfigError("TrainConfig: negative rates");
    net.validate();
  }

  Config echo() const {
    Config c;
    c.set("batch_size", std::to_string(batch_size));
    c.set("lr_start", std::to_string(lr_start));
    c.set("lr_end", std::to_string(lr_end));
    c.set("lambda_d", std::to_string(lambda_d));
    c.set("lambda_u", std::to_string(lambda_u));
    c.set("delta", std::to_string(delta));
    c.set("iou_threshold", std::to_string(iou_threshold));
    c.set("alpha0", std::to_string(alpha0));
    c.set("k", std::to_string(k));
    c.set("warmup_epochs", std::to_string(warmup_epochs));
    c.set("mutual_epochs", std::to_string(mutual_epochs));
    c.set("ae_epochs", std::to_string(ae_epochs));
    c.set("fewshot_epochs", std::to_string(fewshot_epochs));
    c.set("fewshot_shots", std::to_string(fewshot_shots));
    c.set("seed", std::to_string(seed));
    c.set("no_pam", no_pam ? "true" : "false");
    c.set("fusion", average_fusion ? "average" : "mha");
    c.set("no_snm", no_snm ? "true" : "false");
    c.set("no_score", no_score ? "true" : "false");
    c.set("unsup_loss", unsup_kind);
    c.set("rv", std::to_string(net.rv));
    c.set("image_size", std::to_string(net.image_size));
    c.set("feat2d_dim", std::to_string(net.C));
    c.set("feat3d_dim", std::to_string(net.D));
    c.set("heads", std::to_string(net.heads));
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    c.set("enc2d_channels", join(net.enc2d_ch));
    c.set("enc3d_channels", join(net.enc3d_ch));
    c.set("dec_channels", join(net.dec_ch));
    c.set("dec_base_channels", std::to_string(net.dec_c0));
    c.set("disc_channels", join(net.disc_ch));
    c.set("ae_channels", join(net.ae_ch));
    c.set("ae_latent", std::to_string(net.ae_latent));
    return c;
  }

  AblationFlags flags() const { return AblationFlags{no_pam, average_fusion, debug_zero_prior}; }
};

// ----- metric logging -----

class MetricLog {
 public:
  MetricLog(std::string path, std::vector<std::string> columns)
      : path_(std::move(path)), columns_(std::move(columns)) {}

  void row(const std::vector<double>& values) { rows_.push_back(values); }

  void flush() const {
    if (path_.empty()) return;
    std::ofstream f(path_);
    if (!f) throw DataError("MetricLog: cannot open " + path_);
    for (std::size_t i = 0; i < columns_.size(); ++i) f << (i ? "\t" : "") << columns_[i];
    f << "\n";
    f.precision(12);
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "\t" : "") << r[i];
      f << "\n";
    }
  }

 private:
  std::string path_;
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

// ----- pseudo-labeling -----

struct PseudoLabel {
  BinaryVoxelGrid label;
  double score = 1.0;  // sigmoid-normalized discriminator output
};

// Teacher prediction on the weak view, binarized; scored by the frozen
// discriminator on the hard label. Recomputed every time an image is drawn.
inline PseudoLabel pseudo_label(const ParamStore& teacher, const ParamStore& disc,
                                const PrototypeBank& bank, const Image& image,
                                const TrainConfig& cfg, std::uint64_t aug_seed) {
  Tape tape;
  BoundParams bp = bind(tape, teacher);
  Var tokens = encode_prototypes(tape, bp, cfg.net, bank);
  Var soft = reconstruct(tape, bp, cfg.net, weak_augment(image, aug_seed), tokens, cfg.flags());
  ProbVoxelGrid prob = prob_from_tensor(tape.val(soft), cfg.net.rv);
  PseudoLabel out;
  out.label = binarize(prob, cfg.delta);
  Tape dtape;
  BoundParams bd = bind(dtape, disc);
  Var s = discriminate(dtape, bd, cfg.net, dtape.leaf(tensor_from_voxel(out.label)));
  out.score = dtape.val(s).data[0];
  return out;
}

// ----- warm-up stage -----

namespace detail {

inline void check_finite(double v, const char* what, std::int64_t step) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " became non-finite at step " + std::to_string(step));
}

inline Tensor noisy_real(const BinaryVoxelGrid& gt, Rng& rng) {
  Tensor t = tensor_from_voxel(gt);
  for (auto& x : t.data) {
    x += rng.uniform(-0.05, 0.05);
    if (x < 0.0) x = 0.0;
    if (x > 1.0) x = 1.0;
  }
  return t;
}

}  // namespace detail

inline Checkpoint warmup_train(const Manifest& manifest, const PrototypeBank& bank,
                               const TrainConfig& cfg, const std::string& run_dir = "") {
  cfg.validate();
  auto labeled = manifest.by_split("labeled");
  if (labeled.empty()) throw DataError("warmup_train: labeled set is empty");

  Rng root(cfg.seed);
  Rng gen_rng = root.fork("init.gen");
  Rng disc_rng = root.fork("init.disc");
  ParamStore gen = init_generator(cfg.net, gen_rng);
  ParamStore disc = init_discriminator(cfg.net, disc_rng);
  Adam opt_gen(gen), opt_disc(disc);

  const int n = static_cast<int>(labeled.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = static_cast<std::int64_t>(cfg.warmup_epochs) * steps_per_epoch;

  MetricLog log(run_dir.empty() ? "" : run_dir + "/warmup_metrics.tsv",
                {"epoch", "step", "rec_loss", "disc_loss", "lr"});

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng erng = root.fork("warmup.epoch").fork(static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);
    double epoch_rec = 0.0, epoch_disc = 0.0;
    int epoch_batches = 0;

    for (int b0 = 0; b0 < n; b0 += cfg.batch_size, ++step) {
      const int bs = std::min(cfg.batch_size, n - b0);
      const double lr = cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
      Rng srng = root.fork("warmup.step").fork(static_cast<std::uint64_t>(step));

      Tape tape;
      BoundParams bp = bind(tape, gen);
      Var tokens = cfg.no_pam ? -1 : encode_prototypes(tape, bp, cfg.net, bank);

      std::vector<Var> preds(bs);
      Var rec = -1;
      for (int i = 0; i < bs; ++i) {
        const SampleRec& s = *labeled[order[b0 + i]];
        preds[i] = reconstruct(tape, bp, cfg.net, manifest.load_image(s), tokens, cfg.flags());
        Var l = bce_vs_target(tape, preds[i], tensor_from_voxel(manifest.load_voxel(s)));
        rec = rec < 0 ? l : tape.add(rec, l);
      }
      rec = tape.scale(rec, 1.0 / bs);

      double disc_loss_val = 0.0;
      if (!cfg.no_snm) {
        // Discriminator step on noised reals vs detached fakes.
        BoundParams bd = bind(tape, disc);
        Var dloss = -1;
        for (int i = 0; i < bs; ++i) {
          const SampleRec& s = *labeled[order[b0 + i]];
          Rng nrng = srng.fork("real_noise").fork(static_cast<std::uint64_t>(i));
          Var dr = discriminate(tape, bd, cfg.net,
                                tape.leaf(detail::noisy_real(manifest.load_voxel(s), nrng)));
          Var df = discriminate(tape, bd, cfg.net, tape.leaf(tape.val(preds[i])));  // detached
          Var lr_term = tape.scale(tape.log_clamped(dr), -1.0);
          Var lf_term = tape.scale(
              tape.log_clamped(tape.add_const(tape.scale(df, -1.0), 1.0)), -1.0);
          Var both = tape.add(lr_term, lf_term);
          dloss = dloss < 0 ? both : tape.add(dloss, both);
        }
        dloss = tape.scale(dloss, 1.0 / bs);
        disc_loss_val = tape.val(dloss).data[0];
        detail::check_finite(disc_loss_val, "disc_loss", step);
        tape.backward(dloss);
        opt_disc.step(disc, bd.grads(), lr);

        // Generator step against the updated discriminator.
        BoundParams bd2 = bind(tape, disc);
        Var adv = -1;
        for (int i = 0; i < bs; ++i) {
          Var df = discriminate(tape, bd2, cfg.net, preds[i]);
          Var term = tape.scale(tape.log_clamped(df), -1.0);  // non-saturating
          adv = adv < 0 ? term : tape.add(adv, term);
        }
        adv = tape.scale(adv, 1.0 / bs);
        Var gloss = tape.add(rec, tape.scale(adv, cfg.lambda_d));
        const double gv = tape.val(gloss).data[0];
        detail::check_finite(gv, "generator loss", step);
        tape.backward(gloss);
        opt_gen.step(gen, bp.grads(), lr);
      } else {
        const double rv = tape.val(rec).data[0];
        detail::check_finite(rv, "rec_loss", step);
        tape.backward(rec);
        opt_gen.step(gen, bp.grads(), lr);
      }

      epoch_rec += tape.val(rec).data[0];
      epoch_disc += disc_loss_val;
      ++epoch_batches;
    }
    log.row({static_cast<double>(epoch), static_cast<double>(step), epoch_rec / epoch_batches,
             epoch_disc / epoch_batches,
             cosine_lr(step - 1, total_steps, cfg.lr_start, cfg.lr_end)});
  }
  log.flush();

  Checkpoint ck;
  ck.stage = "warmup";
  ck.step = step;
  ck.config_echo = cfg.echo().echo();
  ck.add_store("teacher", gen);
  ck.add_store("student", gen);
  ck.add_store("disc", disc);
  ck.add_store("opt.m", opt_gen.m());
  ck.add_store("opt.v", opt_gen.v());
  Tensor t({1});
  t.data[0] = static_cast<double>(opt_gen.t());
  ck.groups.push_back({"opt.t", t});
  return ck;
}

// ----- teacher-student mutual learning stage -----

inline Checkpoint mutual_train(const Checkpoint& warm, const Manifest& manifest,
                               const PrototypeBank& bank, const TrainConfig& cfg,
                               const std::string& run_dir = "") {
  cfg.validate();
  if (warm.stage != "warmup" && warm.stage != "mutual")
    throw ConfigError("mutual_train: expected a warm-up checkpoint, got stage '" + warm.stage +
                      "'");
  ParamStore teacher = warm.extract_store("teacher");
  ParamStore student = warm.extract_store("student");
  ParamStore disc = warm.extract_store("disc");
  if (!teacher.congruent_with(student))
    throw DataError("mutual_train: teacher/student parameter trees are not shape-congruent");

  Adam opt(student);
  if (warm.has_prefix("opt.m")) {
    std::int64_t t = 0;
    for (const auto& [name, ten] : warm.groups)
      if (name == "opt.t") t = static_cast<std::int64_t>(ten.data[0]);
    opt.restore(warm.extract_store("opt.m"), warm.extract_store("opt.v"), t);
  }

  auto labeled = manifest.by_split("labeled");
  auto unlabeled = manifest.by_split("unlabeled");
  if (labeled.empty()) throw DataError("mutual_train: labeled set is empty");
  if (unlabeled.empty()) throw DataError("mutual_train: unlabeled set is empty");

  const int half = std::max(1, cfg.batch_size / 2);
  const std::int64_t n_train = static_cast<std::int64_t>(labeled.size() + unlabeled.size());
  const std::int64_t steps_per_epoch = std::max<std::int64_t>(1, n_train / cfg.batch_size);
  const std::int64_t total_steps = static_cast<std::int64_t>(cfg.mutual_epochs) * steps_per_epoch;

  Rng root(cfg.seed);
  // Cycled, reshuffled index streams for both halves of each mini-batch.
  struct Stream {
    std::vector<int> order;
    std::size_t pos = 0;
    int epoch = 0;
    Rng rng;
    explicit Stream(int n, Rng r) : rng(r) {
      order.resize(n);
      for (int i = 0; i < n; ++i) order[i] = i;
      reshuffle();
    }
    void reshuffle() {
      Rng e = rng.fork(static_cast<std::uint64_t>(epoch++));
      e.shuffle(order);
      pos = 0;
    }
    int next() {
      if (pos >= order.size()) reshuffle();
      return order[pos++];
    }
  };
  Stream lab_stream(static_cast<int>(labeled.size()), root.fork("mutual.lab"));
  Stream unl_stream(static_cast<int>(unlabeled.size()), root.fork("mutual.unl"));

  MetricLog log(run_dir.empty() ? "" : run_dir + "/mutual_metrics.tsv",
                {"epoch", "step", "rec_loss", "unsup_loss", "mean_score", "alpha", "lr"});

  for (std::int64_t step = 0; step < total_steps; ++step) {
    const double lr = cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
    Rng srng = root.fork("mutual.step").fork(static_cast<std::uint64_t>(step));

    Tape tape;
    BoundParams bp = bind(tape, student);
    Var tokens = cfg.no_pam ? -1 : encode_prototypes(tape, bp, cfg.net, bank);

    // Supervised half: strong-augmented inputs vs ground truth.
    Var rec = -1;
    for (int i = 0; i < half; ++i) {
      const SampleRec& s = *labeled[lab_stream.next()];
      const std::uint64_t aug_seed = srng.fork("lab_aug").fork(static_cast<std::uint64_t>(i)).next_u64();
      Var pred = reconstruct(tape, bp, cfg.net, strong_augment(manifest.load_image(s), aug_seed),
                             tokens, cfg.flags());
      Var l = bce_vs_target(tape, pred, tensor_from_voxel(manifest.load_voxel(s)));
      rec = rec < 0 ? l : tape.add(rec, l);
    }
    rec = tape.scale(rec, 1.0 / half);

    // Unsupervised half: teacher pseudo-labels on weak views, student on
    // strong views, Brier terms weighted by frozen-discriminator scores.
    Var unsup = -1;
    double mean_score = 0.0;
    for (int i = 0; i < half; ++i) {
      const SampleRec& s = *unlabeled[unl_stream.next()];
      const Image img = manifest.load_image(s);
      const std::uint64_t weak_seed =
          srng.fork("weak_aug").fork(static_cast<std::uint64_t>(i)).next_u64();
      const std::uint64_t strong_seed =
          srng.fork("strong_aug").fork(static_cast<std::uint64_t>(i)).next_u64();
      PseudoLabel pl;
      if (cfg.no_score) {
        // scoring skipped entirely; identical to injecting scores of 1
        Tape ttape;
        BoundParams bt = bind(ttape, teacher);
        Var ttokens = encode_prototypes(ttape, bt, cfg.net, bank);
        Var soft = reconstruct(ttape, bt, cfg.net, weak_augment(img, weak_seed), ttokens,
                               cfg.flags());
        pl.label = binarize(prob_from_tensor(ttape.val(soft), cfg.net.rv), cfg.delta);
        pl.score = 1.0;
      } else {
        pl = pseudo_label(teacher, disc, bank, img, cfg, weak_seed);
        if (cfg.debug_inject_unit_scores) pl.score = 1.0;
      }
      mean_score += pl.score;

      Var pred = reconstruct(tape, bp, cfg.net, strong_augment(img, strong_seed), tokens,
                             cfg.flags());
      const Tensor target = tensor_from_voxel(pl.label);
      Var term = cfg.unsup_kind == "bce" ? bce_vs_target(tape, pred, target)
                                         : brier_vs_target(tape, pred, target);
      term = tape.scale(term, pl.score);  // score enters as a constant
      unsup = unsup < 0 ? term : tape.add(unsup, term);
    }
    unsup = tape.scale(unsup, 1.0 / half);
    mean_score /= half;

    Var loss = tape.add(rec, tape.scale(unsup, cfg.lambda_u));
    const double lv = tape.val(loss).data[0];
    detail::check_finite(lv, "student loss", step);
    tape.backward(loss);
    opt.step(student, bp.grads(), lr);

    const double alpha = cosine_alpha(step, total_steps, cfg.alpha0);
    ema_update(teacher, student, alpha);

    if ((step + 1) % steps_per_epoch == 0 || step + 1 == total_steps) {
      log.row({static_cast<double>(step / steps_per_epoch), static_cast<double>(step + 1),
               tape.val(rec).data[0], tape.val(unsup).data[0], mean_score, alpha, lr});
    }
  }
  log.flush();

  Checkpoint ck;
  ck.stage = "mutual";
  ck.step = warm.step + total_steps;
  ck.config_echo = cfg.echo().echo();
  ck.add_store("teacher", teacher);
  ck.add_store("student", student);
  ck.add_store("disc", disc);
  ck.add_store("opt.m", opt.m());
  ck.add_store("opt.v", opt.v());
  Tensor t({1});
  t.data[0] = static_cast<double>(opt.t());
  ck.groups.push_back({"opt.t", t});
  return ck;
}

}  // namespace ssp3d
