#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ssp3d/bank.hpp"
#include "ssp3d/checkpoint.hpp"
#include "ssp3d/errors.hpp"
#include "ssp3d/models.hpp"
#include "ssp3d/synthdata.hpp"
#include "ssp3d/trainer.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

struct EvalReport {
  std::map<std::string, double> per_category;  // mean IoU (%)
  std::map<std::string, int> n_samples;
  double mean_iou_category = 0.0;  // unweighted mean over categories (%)
  double mean_iou_sample = 0.0;    // sample-weighted mean (%)
  std::string checkpoint_id;
  std::string config_echo;
  std::vector<std::pair<std::string, double>> per_sample;  // (id, IoU in [0,1])
};

// Per-sample IoU of the selected generator against ground truth at the
// configured threshold; deterministic reduce in manifest order.
inline EvalReport evaluate(const Checkpoint& ck, const Manifest& manifest,
                           const PrototypeBank& bank, const TrainConfig& cfg,
                           const std::string& which = "teacher") {
  if (which != "teacher" && which != "student")
    throw ConfigError("evaluate: 'which' must be teacher or student");
  auto test = manifest.by_split("test");
  if (test.empty()) throw DataError("evaluate: no test samples in manifest");
  ParamStore gen = ck.extract_store(which);

  EvalReport rep;
  rep.checkpoint_id = ck.stage + "@" + std::to_string(ck.step) + ":" + which;
  rep.config_echo = cfg.echo().echo();

  std::map<std::string, double> acc;
  for (const auto* s : test) {
    Tape tape;
    BoundParams bp = bind(tape, gen);
    Var tokens = cfg.no_pam ? -1 : encode_prototypes(tape, bp, cfg.net, bank);
    Var pred = reconstruct(tape, bp, cfg.net, manifest.load_image(*s), tokens, cfg.flags());
    const double v = iou(prob_from_tensor(tape.val(pred), cfg.net.rv), manifest.load_voxel(*s),
                         cfg.iou_threshold);
    rep.per_sample.push_back({s->id, v});
    acc[s->category] += v;
    rep.n_samples[s->category]++;
  }
  double cat_sum = 0.0, all_sum = 0.0;
  int all_n = 0;
  for (const auto& [cat, sum] : acc) {
    rep.per_category[cat] = 100.0 * sum / rep.n_samples[cat];
    cat_sum += rep.per_category[cat];
    all_sum += sum;
    all_n += rep.n_samples[cat];
  }
  rep.mean_iou_category = cat_sum / static_cast<double>(acc.size());
  rep.mean_iou_sample = 100.0 * all_sum / all_n;
  return rep;
}

// Report file: tab-separated, one category per line, both aggregation modes
// labeled explicitly; a companion per-sample log allows exact recounting.
inline void save_report(const EvalReport& rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/report.tsv");
    if (!f) throw DataError("save_report: cannot open " + dir + "/report.tsv");
    f << std::setprecision(12);
    f << "checkpoint\t" << rep.checkpoint_id << "\n";
    for (const auto& [cat, v] : rep.per_category)
      f << "category\t" << cat << "\t" << v << "\t" << rep.n_samples.at(cat) << "\n";
    f << "mean_iou_category_unweighted\t" << rep.mean_iou_category << "\n";
    f << "mean_iou_sample_weighted\t" << rep.mean_iou_sample << "\n";
  }
  {
    std::ofstream f(dir + "/per_sample_iou.tsv");
    f << std::setprecision(12);
    for (const auto& [id, v] : rep.per_sample) f << id << "\t" << v << "\n";
  }
  std::ofstream cf(dir + "/config_echo.txt");
  cf << rep.config_echo;
}

inline EvalReport load_report(const std::string& dir) {
  std::ifstream f(dir + "/report.tsv");
  if (!f) throw DataError("load_report: cannot open " + dir + "/report.tsv");
  EvalReport rep;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    std::getline(ss, tag, '\t');
    if (tag == "checkpoint") {
      std::getline(ss, rep.checkpoint_id, '\t');
    } else if (tag == "category") {
      std::string cat, v, n;
      std::getline(ss, cat, '\t');
      std::getline(ss, v, '\t');
      std::getline(ss, n, '\t');
      rep.per_category[cat] = std::stod(v);
      rep.n_samples[cat] = std::stoi(n);
    } else if (tag == "mean_iou_category_unweighted") {
      std::string v;
      std::getline(ss, v, '\t');
      rep.mean_iou_category = std::stod(v);
    } else if (tag == "mean_iou_sample_weighted") {
      std::string v;
      std::getline(ss, v, '\t');
      rep.mean_iou_sample = std::stod(v);
    }
  }
  return rep;
}

// Delta table against a designated baseline report. Mismatched category
// sets reduce to the intersection with a warning line.
inline std::string compare_runs(const std::vector<EvalReport>& reports, std::size_t baseline = 0) {
  if (reports.size() < 2) throw ConfigError("compare_runs: need at least two reports");
  if (baseline >= reports.size()) throw ConfigError("compare_runs: baseline index out of range");
  const EvalReport& base = reports[baseline];

  std::vector<std::string> cats;
  for (const auto& [cat, v] : base.per_category) {
    bool everywhere = true;
    for (const auto& r : reports) everywhere &= r.per_category.count(cat) != 0;
    if (everywhere) cats.push_back(cat);
  }
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  bool mismatch = false;
  for (const auto& r : reports)
    if (r.per_category.size() != cats.size()) mismatch = true;
  if (mismatch) out << "# warning: category sets differ; using intersection\n";

  out << "run";
  for (const auto& c : cats) out << "\t" << c << "\td" << c;
  out << "\tmean\tdmean\n";
  for (const auto& r : reports) {
    double mean = 0.0, base_mean = 0.0;
    for (const auto& c : cats) {
      mean += r.per_category.at(c);
      base_mean += base.per_category.at(c);
    }
    mean /= cats.size();
    base_mean /= cats.size();
    out << r.checkpoint_id;
    for (const auto& c : cats)
      out << "\t" << r.per_category.at(c) << "\t"
          << r.per_category.at(c) - base.per_category.at(c);
    out << "\t" << mean << "\t" << mean - base_mean << "\n";
  }
  return out.str();
}

}  // namespace ssp3d
