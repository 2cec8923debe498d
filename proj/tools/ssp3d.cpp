#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssp3d/ssp3d.hpp"

namespace fs = std::filesystem;
using namespace ssp3d;

namespace {

// Flags shared by the training-family subcommands. CLI values override the
// config file, which overrides the config echoed in a resumed checkpoint.
struct Overrides {
  std::optional<std::string> fusion, unsup_loss;
  std::optional<double> alpha0, lambda_d, lambda_u, delta;
  std::optional<std::int64_t> seed, batch_size, k;
  std::optional<std::int64_t> warmup_epochs, mutual_epochs, ae_epochs, fewshot_epochs;
  bool no_pam = false, no_snm = false, no_score = false;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--no-pam", no_pam, "Disable the prototype attention prior");
    cmd->add_flag("--no-snm", no_snm, "Disable the shape discriminator");
    cmd->add_flag("--no-score", no_score, "Use unit pseudo-label confidence scores");
    cmd->add_option("--fusion", fusion, "Prior fusion: mha|average");
    cmd->add_option("--unsup-loss", unsup_loss, "Unsupervised loss: l2|bce");
    cmd->add_option("--alpha0", alpha0, "EMA decay floor");
    cmd->add_option("--lambda-d", lambda_d, "Adversarial loss weight");
    cmd->add_option("--lambda-u", lambda_u, "Unsupervised loss weight");
    cmd->add_option("--delta", delta, "Pseudo-label binarization threshold");
    cmd->add_option("--seed", seed, "Master RNG seed");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--k", k, "Prototypes per category");
    cmd->add_option("--warmup-epochs", warmup_epochs, "Warm-up epochs");
    cmd->add_option("--mutual-epochs", mutual_epochs, "Mutual-learning epochs");
    cmd->add_option("--ae-epochs", ae_epochs, "Autoencoder epochs");
    cmd->add_option("--fewshot-epochs", fewshot_epochs, "Few-shot finetune epochs");
  }

  void apply(Config& c) const {
    if (no_pam) c.set("no_pam", "true");
    if (no_snm) c.set("no_snm", "true");
    if (no_score) c.set("no_score", "true");
    if (fusion) c.set("fusion", *fusion);
    if (unsup_loss) c.set("unsup_loss", *unsup_loss);
    if (alpha0) c.set("alpha0", std::to_string(*alpha0));
    if (lambda_d) c.set("lambda_d", std::to_string(*lambda_d));
    if (lambda_u) c.set("lambda_u", std::to_string(*lambda_u));
    if (delta) c.set("delta", std::to_string(*delta));
    if (seed) c.set("seed", std::to_string(*seed));
    if (batch_size) c.set("batch_size", std::to_string(*batch_size));
    if (k) c.set("k", std::to_string(*k));
    if (warmup_epochs) c.set("warmup_epochs", std::to_string(*warmup_epochs));
    if (mutual_epochs) c.set("mutual_epochs", std::to_string(*mutual_epochs));
    if (ae_epochs) c.set("ae_epochs", std::to_string(*ae_epochs));
    if (fewshot_epochs) c.set("fewshot_epochs", std::to_string(*fewshot_epochs));
  }
};

Config merged_config(const std::string& base_echo, const std::string& config_path,
                     const Overrides& ov) {
  Config c = base_echo.empty() ? Config() : Config::from_string(base_echo);
  if (!config_path.empty()) {
    Config file = Config::from_file(config_path);
    for (const auto& k : file.keys()) c.set(k, file.get(k, ""));
  }
  ov.apply(c);
  return c;
}

std::string run_dir_of(const std::string& out_path) {
  fs::path p = fs::path(out_path).parent_path();
  std::string dir = p.empty() ? "." : p.string();
  fs::create_directories(dir);
  return dir;
}

DataConfig data_config_from(const Config& c) {
  DataConfig d;
  if (c.has("categories")) {
    d.categories.clear();
    std::istringstream ss(c.get("categories", ""));
    std::string tok;
    while (std::getline(ss, tok, ',')) d.categories.push_back(tok);
    if (d.categories.empty()) throw ConfigError("gen-data: empty category list");
  }
  d.per_category_train = static_cast<int>(c.get_int("per_category_train", d.per_category_train));
  d.per_category_test = static_cast<int>(c.get_int("per_category_test", d.per_category_test));
  d.rv = static_cast<int>(c.get_int("rv", d.rv));
  d.image_size = static_cast<int>(c.get_int("image_size", d.image_size));
  d.ratio = c.get_double("ratio", d.ratio);
  d.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSP3D: semi-supervised single-view voxel reconstruction"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic image/voxel dataset");
  std::string gen_config, gen_out;
  std::optional<std::int64_t> gen_seed;
  std::optional<double> gen_ratio;
  gen->add_option("--config", gen_config, "key = value config file");
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Master RNG seed");
  gen->add_option("--ratio", gen_ratio, "Labeled ratio in (0,1]");
  gen->callback([&] {
    Config c = gen_config.empty() ? Config() : Config::from_file(gen_config);
    if (gen_seed) c.set("seed", std::to_string(*gen_seed));
    if (gen_ratio) c.set("ratio", std::to_string(*gen_ratio));
    Manifest m = build_dataset(data_config_from(c), gen_out);
    std::cout << "gen-data: wrote " << m.samples.size() << " samples to " << gen_out << "\n";
  });

  // ---- train-ae ----
  auto* tae = app.add_subcommand("train-ae", "Train the prototype shape autoencoder");
  std::string tae_manifest, tae_out, tae_config;
  Overrides tae_ov;
  tae->add_option("--manifest", tae_manifest, "Dataset manifest")->required();
  tae->add_option("--out", tae_out, "Output checkpoint path")->required();
  tae->add_option("--config", tae_config, "key = value config file");
  tae_ov.add_to(tae);
  tae->callback([&] {
    TrainConfig cfg = TrainConfig::from_config(merged_config("", tae_config, tae_ov));
    Manifest m = load_manifest(tae_manifest);
    AETrainResult res = train_autoencoder(m, cfg);
    Checkpoint ck;
    ck.stage = "ae";
    ck.step = static_cast<std::int64_t>(res.epoch_loss.size());
    ck.config_echo = cfg.echo().echo();
    ck.add_store("ae", res.params);
    run_dir_of(tae_out);
    save_checkpoint(ck, tae_out);
    std::cout << "train-ae: final epoch loss " << res.epoch_loss.back() << "\n";
  });

  // ---- build-prototypes ----
  auto* bpr = app.add_subcommand("build-prototypes", "Cluster labeled shapes into a prototype bank");
  std::string bpr_manifest, bpr_ae, bpr_out, bpr_config;
  Overrides bpr_ov;
  bpr->add_option("--manifest", bpr_manifest, "Dataset manifest")->required();
  bpr->add_option("--ae", bpr_ae, "Autoencoder checkpoint")->required();
  bpr->add_option("--out", bpr_out, "Output bank directory")->required();
  bpr->add_option("--config", bpr_config, "key = value config file");
  bpr_ov.add_to(bpr);
  bpr->callback([&] {
    Checkpoint ae_ck = load_checkpoint(bpr_ae);
    TrainConfig cfg = TrainConfig::from_config(merged_config(ae_ck.config_echo, bpr_config, bpr_ov));
    Manifest m = load_manifest(bpr_manifest);
    PrototypeBank bank = build_prototype_bank(m, ae_ck.extract_store("ae"), cfg.k, cfg.seed,
                                              cfg.net, cfg.delta);
    save_bank(bank, bpr_out);
    std::cout << "build-prototypes: " << bank.entries.size() << " prototypes (k=" << bank.k
              << ")\n";
  });

  // ---- warmup ----
  auto* wu = app.add_subcommand("warmup", "Supervised + adversarial warm-up on the labeled set");
  std::string wu_manifest, wu_bank, wu_config, wu_out;
  Overrides wu_ov;
  wu->add_option("--manifest", wu_manifest, "Dataset manifest")->required();
  wu->add_option("--bank", wu_bank, "Prototype bank directory")->required();
  wu->add_option("--config", wu_config, "key = value config file");
  wu->add_option("--out", wu_out, "Output checkpoint path")->required();
  wu_ov.add_to(wu);
  wu->callback([&] {
    TrainConfig cfg = TrainConfig::from_config(merged_config("", wu_config, wu_ov));
    Manifest m = load_manifest(wu_manifest);
    PrototypeBank bank = load_bank(wu_bank);
    Checkpoint ck = warmup_train(m, bank, cfg, run_dir_of(wu_out));
    save_checkpoint(ck, wu_out);
    std::cout << "warmup: " << ck.step << " steps\n";
  });

  // ---- mutual ----
  auto* mu = app.add_subcommand("mutual", "Teacher-student mutual learning from a warm checkpoint");
  std::string mu_resume, mu_manifest, mu_bank, mu_config, mu_out;
  Overrides mu_ov;
  mu->add_option("--resume", mu_resume, "Warm-up checkpoint")->required();
  mu->add_option("--manifest", mu_manifest, "Dataset manifest")->required();
  mu->add_option("--bank", mu_bank, "Prototype bank directory")->required();
  mu->add_option("--config", mu_config, "key = value config file");
  mu->add_option("--out", mu_out, "Output checkpoint path")->required();
  mu_ov.add_to(mu);
  mu->callback([&] {
    Checkpoint warm = load_checkpoint(mu_resume);
    TrainConfig cfg = TrainConfig::from_config(merged_config(warm.config_echo, mu_config, mu_ov));
    Manifest m = load_manifest(mu_manifest);
    PrototypeBank bank = load_bank(mu_bank);
    Checkpoint ck = mutual_train(warm, m, bank, cfg, run_dir_of(mu_out));
    save_checkpoint(ck, mu_out);
    std::cout << "mutual: " << ck.step << " cumulative steps\n";
  });

  // ---- fewshot ----
  auto* fsc = app.add_subcommand("fewshot", "Finetune on a held-out novel category");
  std::string fs_resume, fs_manifest, fs_novel, fs_ae, fs_bank, fs_config, fs_out, fs_bank_out;
  Overrides fs_ov;
  fsc->add_option("--resume", fs_resume, "Base checkpoint")->required();
  fsc->add_option("--manifest", fs_manifest, "Manifest containing novel-category samples")
      ->required();
  fsc->add_option("--novel", fs_novel, "Novel category name")->required();
  fsc->add_option("--ae", fs_ae, "Autoencoder checkpoint")->required();
  fsc->add_option("--bank", fs_bank, "Base prototype bank directory")->required();
  fsc->add_option("--config", fs_config, "key = value config file");
  fsc->add_option("--out", fs_out, "Output checkpoint path")->required();
  fsc->add_option("--bank-out", fs_bank_out, "Directory for the extended bank");
  fs_ov.add_to(fsc);
  fsc->callback([&] {
    Checkpoint base = load_checkpoint(fs_resume);
    TrainConfig cfg = TrainConfig::from_config(merged_config(base.config_echo, fs_config, fs_ov));
    Manifest m = load_manifest(fs_manifest);
    PrototypeBank bank = load_bank(fs_bank);
    Checkpoint ae_ck = load_checkpoint(fs_ae);
    Checkpoint ck = fewshot_finetune(base, m, fs_novel, ae_ck.extract_store("ae"), bank, cfg,
                                     run_dir_of(fs_out));
    save_checkpoint(ck, fs_out);
    if (!fs_bank_out.empty()) save_bank(bank, fs_bank_out);
    std::cout << "fewshot: finetuned on '" << fs_novel << "'\n";
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_manifest, ev_bank, ev_which = "teacher", ev_out, ev_config;
  Overrides ev_ov;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--bank", ev_bank, "Prototype bank directory")->required();
  ev->add_option("--which", ev_which, "teacher|student");
  ev->add_option("--out", ev_out, "Report output directory");
  ev->add_option("--config", ev_config, "key = value config file");
  ev_ov.add_to(ev);
  ev->callback([&] {
    Checkpoint ck = load_checkpoint(ev_ckpt);
    TrainConfig cfg = TrainConfig::from_config(merged_config(ck.config_echo, ev_config, ev_ov));
    Manifest m = load_manifest(ev_manifest);
    PrototypeBank bank = load_bank(ev_bank);
    EvalReport rep = evaluate(ck, m, bank, cfg, ev_which);
    if (!ev_out.empty()) save_report(rep, ev_out);
    std::cout.precision(6);
    for (const auto& [cat, v] : rep.per_category)
      std::cout << cat << "\t" << v << "\t(n=" << rep.n_samples.at(cat) << ")\n";
    std::cout << "mean IoU (category-unweighted)\t" << rep.mean_iou_category << "\n";
    std::cout << "mean IoU (sample-weighted)\t" << rep.mean_iou_sample << "\n";
  });

  // ---- report ----
  auto* rp = app.add_subcommand("report", "Compare evaluation reports against a baseline");
  std::vector<std::string> rp_runs;
  std::string rp_baseline, rp_out;
  rp->add_option("--runs", rp_runs, "Report directories")->required()->expected(-1);
  rp->add_option("--baseline", rp_baseline, "Baseline report directory")->required();
  rp->add_option("--out", rp_out, "Optional output file for the delta table");
  rp->callback([&] {
    std::vector<EvalReport> reports;
    reports.push_back(load_report(rp_baseline));
    for (const auto& d : rp_runs)
      if (d != rp_baseline) reports.push_back(load_report(d));
    if (reports.size() < 2) throw ConfigError("report: need at least one non-baseline run");
    std::string table = compare_runs(reports, 0);
    if (!rp_out.empty()) {
      std::ofstream f(rp_out);
      if (!f) throw DataError("report: cannot open " + rp_out);
      f << table;
    }
    std::cout << table;
  });

  // ---- plots ----
  auto* pl = app.add_subcommand("plots", "Render SVG charts for a run directory");
  std::string pl_run;
  pl->add_option("--run", pl_run, "Run directory with metric logs")->required();
  pl->callback([&] {
    emit_plots(pl_run);
    std::cout << "plots: wrote " << pl_run << "/plots\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
