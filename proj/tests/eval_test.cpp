#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ssp3d/eval.hpp"
#include "ssp3d/plots.hpp"
#include "ssp3d/trainer.hpp"
#include "test_util.hpp"

using namespace ssp3d;
using namespace ssp3d::testutil;
namespace fs = std::filesystem;

namespace {

Checkpoint tiny_checkpoint(const TrainConfig& cfg) {
  Rng r1(1), r2(2);
  Checkpoint ck;
  ck.stage = "mutual";
  ck.step = 10;
  ck.config_echo = cfg.echo().echo();
  ParamStore gen = init_generator(cfg.net, r1);
  ck.add_store("teacher", gen);
  ck.add_store("student", gen);
  ck.add_store("disc", init_discriminator(cfg.net, r2));
  return ck;
}

}  // namespace

TEST(Eval, AggregatesMatchPerSampleLog) {
  Manifest m = micro_dataset("ev_ds", 2, 3, 0.5);
  TrainConfig cfg = tiny_train_cfg();
  Checkpoint ck = tiny_checkpoint(cfg);
  PrototypeBank bank = tiny_bank(cfg.net.rv);
  EvalReport rep = evaluate(ck, m, bank, cfg);

  ASSERT_EQ(rep.per_sample.size(), 6u);  // 2 categories x 3 test
  // recount from the per-sample log
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& [id, v] : rep.per_sample) {
    const std::string cat = id.substr(0, id.rfind('-'));
    acc[cat].first += v;
    acc[cat].second += 1;
  }
  double cat_mean = 0.0, total = 0.0;
  int n = 0;
  for (const auto& [cat, sv] : acc) {
    const double mean = 100.0 * sv.first / sv.second;
    EXPECT_NEAR(rep.per_category.at(cat), mean, 1e-9);
    cat_mean += mean;
    total += sv.first;
    n += sv.second;
  }
  EXPECT_NEAR(rep.mean_iou_category, cat_mean / acc.size(), 1e-9);
  EXPECT_NEAR(rep.mean_iou_sample, 100.0 * total / n, 1e-9);
  fs::remove_all("ev_ds");
}

TEST(Eval, ReadOnlyOnCheckpointAndErrorsOnEmptyTestSet) {
  Manifest m = micro_dataset("ev_ro", 2, 2, 0.5);
  TrainConfig cfg = tiny_train_cfg();
  Checkpoint ck = tiny_checkpoint(cfg);
  PrototypeBank bank = tiny_bank(cfg.net.rv);
  save_checkpoint(ck, "ev_ro.ckpt");
  const std::string before = read_bytes("ev_ro.ckpt");
  evaluate(load_checkpoint("ev_ro.ckpt"), m, bank, cfg, "student");
  EXPECT_EQ(read_bytes("ev_ro.ckpt"), before);

  Manifest empty_test = m;
  for (auto& s : empty_test.samples)
    if (s.split == "test") s.split = "unlabeled";
  EXPECT_THROW(evaluate(ck, empty_test, bank, cfg), DataError);
  EXPECT_THROW(evaluate(ck, m, bank, cfg, "discriminator"), ConfigError);
  std::remove("ev_ro.ckpt");
  fs::remove_all("ev_ro");
}

TEST(Eval, ReportSaveLoadRoundTrip) {
  EvalReport rep;
  rep.checkpoint_id = "mutual@10:teacher";
  rep.per_category = {{"tube", 55.5}, {"block-stack", 44.25}};
  rep.n_samples = {{"tube", 3}, {"block-stack", 5}};
  rep.mean_iou_category = (55.5 + 44.25) / 2.0;
  rep.mean_iou_sample = (3 * 55.5 + 5 * 44.25) / 8.0;
  rep.per_sample = {{"tube-0001", 0.555}};
  save_report(rep, "ev_rep");
  EvalReport back = load_report("ev_rep");
  EXPECT_EQ(back.checkpoint_id, rep.checkpoint_id);
  EXPECT_NEAR(back.per_category.at("tube"), 55.5, 1e-9);
  EXPECT_EQ(back.n_samples.at("block-stack"), 5);
  EXPECT_NEAR(back.mean_iou_category, rep.mean_iou_category, 1e-9);
  EXPECT_NEAR(back.mean_iou_sample, rep.mean_iou_sample, 1e-9);
  fs::remove_all("ev_rep");
}

TEST(CompareRuns, DeltasAgainstBaseline) {
  EvalReport base, run;
  base.checkpoint_id = "warmup@5:teacher";
  base.per_category = {{"a", 40.0}, {"b", 50.0}};
  run.checkpoint_id = "mutual@10:teacher";
  run.per_category = {{"a", 45.0}, {"b", 52.0}};
  const std::string table = compare_runs({base, run});
  EXPECT_NE(table.find("mutual@10:teacher"), std::string::npos);
  EXPECT_NE(table.find("5.000000"), std::string::npos);   // delta on a
  EXPECT_NE(table.find("3.500000"), std::string::npos);   // mean delta
  EXPECT_EQ(table.find("warning"), std::string::npos);
  EXPECT_THROW(compare_runs({base}), ConfigError);
}

TEST(CompareRuns, CategoryMismatchWarnsAndIntersects) {
  EvalReport base, run;
  base.per_category = {{"a", 40.0}, {"b", 50.0}};
  run.per_category = {{"a", 45.0}};
  const std::string table = compare_runs({base, run});
  EXPECT_NE(table.find("warning"), std::string::npos);
  EXPECT_EQ(table.find("\tb\t"), std::string::npos);
}

TEST(CompareRuns, MeanDeltaEqualsMeanOfCategoryDeltas) {
  EvalReport base, run;
  base.per_category = {{"a", 40.0}, {"b", 50.0}, {"c", 60.0}};
  run.per_category = {{"a", 41.0}, {"b", 53.0}, {"c", 59.0}};
  const std::string table = compare_runs({base, run});
  // deltas 1, 3, -1 -> mean delta 1
  EXPECT_NE(table.find("\t1.000000\n"), std::string::npos);
}

TEST(Plots, MissingLogsListExpectedFiles) {
  fs::create_directories("pl_empty");
  try {
    emit_plots("pl_empty");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("warmup_metrics.tsv"), std::string::npos);
    EXPECT_NE(msg.find("mutual_metrics.tsv"), std::string::npos);
  }
  fs::remove_all("pl_empty");
}

TEST(Plots, ByteStableRegeneration) {
  fs::create_directories("pl_run");
  {
    std::ofstream f("pl_run/warmup_metrics.tsv");
    f << "epoch\tstep\trec_loss\tdisc_loss\tlr\n0\t2\t0.9\t1.3\t0.001\n1\t4\t0.7\t1.2\t0.0009\n";
  }
  {
    std::ofstream f("pl_run/mutual_metrics.tsv");
    f << "epoch\tstep\trec_loss\tunsup_loss\tmean_score\talpha\tlr\n"
      << "0\t2\t0.8\t0.2\t0.5\t0.9996\t0.001\n1\t4\t0.6\t0.15\t0.6\t0.9998\t0.0008\n";
  }
  emit_plots("pl_run");
  const std::string a = read_bytes("pl_run/plots/warmup_loss.svg");
  const std::string b = read_bytes("pl_run/plots/mutual_loss.svg");
  EXPECT_FALSE(a.empty());
  emit_plots("pl_run");
  EXPECT_EQ(read_bytes("pl_run/plots/warmup_loss.svg"), a);
  EXPECT_EQ(read_bytes("pl_run/plots/mutual_loss.svg"), b);
  fs::remove_all("pl_run");
}

TEST(Plots, SweepChartsWhenTablesPresent) {
  fs::create_directories("pl_sweep");
  std::ofstream("pl_sweep/warmup_metrics.tsv")
      << "epoch\tstep\trec_loss\tdisc_loss\tlr\n0\t1\t0.9\t1.3\t0.001\n";
  std::ofstream("pl_sweep/mutual_metrics.tsv")
      << "epoch\tstep\trec_loss\tunsup_loss\tmean_score\talpha\tlr\n0\t1\t0.8\t0.2\t0.5\t1\t0.001\n";
  std::ofstream("pl_sweep/ratio_sweep.tsv")
      << "ratio\tsupervised\tssl\n0.01\t20\t25\n0.1\t40\t46\n0.2\t50\t53\n";
  std::ofstream("pl_sweep/alpha_sweep.tsv")
      << "alpha\tiou\n0.99\t41\n0.999\t44\n0.9996\t45\n1.0\t42\n";
  emit_plots("pl_sweep");
  EXPECT_TRUE(fs::exists("pl_sweep/plots/iou_vs_ratio.svg"));
  EXPECT_TRUE(fs::exists("pl_sweep/plots/iou_vs_alpha.svg"));
  // one polyline point per alpha value
  const std::string svg = read_bytes("pl_sweep/plots/iou_vs_alpha.svg");
  std::size_t points = 0, pos = 0;
  const std::string needle = ",";
  pos = svg.find("points=\"");
  ASSERT_NE(pos, std::string::npos);
  const std::size_t end = svg.find('"', pos + 8);
  std::string pts = svg.substr(pos + 8, end - pos - 8);
  for (char c : pts)
    if (c == ',') ++points;
  EXPECT_EQ(points, 4u);
  fs::remove_all("pl_sweep");
}
