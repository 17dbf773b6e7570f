// sac-kit: selective fine-tuning and evaluation toolkit for crack segmentation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sac/sac.hpp"

namespace fs = std::filesystem;
using sac::strf;

namespace {

sac::ArchitectureSpec load_spec_any(const std::string& path) {
  sac::json j = sac::load_json_file(path);
  if (j.contains("groups")) return sac::arch_spec_from_json(j);
  // toy segmenter spec: instantiate and derive its parameter layout
  sac::ToySegmenterSpec ts = sac::ToySegmenterSpec::from_json(j);
  sac::ToySegmenter model(ts, 0);
  return model.architecture();
}

std::string human_count(std::int64_t n) {
  if (n >= 1000000) return strf("%.1fM", n / 1e6);
  if (n >= 1000) return strf("%.1fK", n / 1e3);
  return std::to_string(n);
}

int cmd_audit(const std::string& spec_path, const std::string& strategy, int rank,
              const std::vector<std::string>& sites, int last_k, bool verbose) {
  sac::ArchitectureSpec spec = load_spec_any(spec_path);
  sac::PlanOptions opt;
  opt.lora_rank = rank;
  for (const auto& s : sites) opt.lora_targets.push_back({s, last_k});
  sac::TuningPlan plan = sac::make_plan(strategy, opt);
  sac::ParamBudget b = sac::audit_budget(spec, plan);

  std::printf("spec: %s (%lld parameters)\n", spec.name.c_str(),
              static_cast<long long>(b.total_count));
  std::printf("plan: %s\n", plan.describe().c_str());
  std::printf("%-28s %14s %10s\n", "Tuning Method", "# Params", "% Params");
  std::printf("%-28s %14s %10s\n", plan.describe().c_str(),
              strf("%lld (%s)", static_cast<long long>(b.trainable_count),
                   human_count(b.trainable_count).c_str())
                  .c_str(),
              strf("%.4f", b.percent).c_str());
  for (const auto& [what, n] : b.aux)
    std::printf("  [%s: %lld = %.4f%%]\n", what.c_str(), static_cast<long long>(n),
                100.0 * static_cast<double>(n) / static_cast<double>(b.total_count));
  if (verbose) {
    std::printf("breakdown:\n");
    for (const auto& [name, n] : b.breakdown)
      std::printf("  %-48s %12lld\n", name.c_str(), static_cast<long long>(n));
  }
  return 0;
}

int cmd_synth(int n, int size, std::uint64_t seed, const std::string& out,
              const std::string& name, const std::string& split) {
  sac::DatasetManifest m =
      sac::synth_crack_dataset(n, size, seed, out, name, sac::parse_split(split));
  std::printf("wrote %zu image/mask pairs under %s (manifest.json, split=%s)\n", m.entries.size(),
              out.c_str(), split.c_str());
  return 0;
}

int cmd_train(const std::string& config_path) {
  sac::TrainJob job = sac::train_job_from_json(sac::load_json_file(config_path));
  sac::TrainOutcome out = sac::run_train_job(job);
  std::printf("untrained val F1: %.4f\n", out.untrained_val_f1);
  for (const auto& e : out.history.epochs)
    std::printf("epoch %2d  loss %.4f  val F1 %.4f  (%.1fs)\n", e.epoch, e.mean_loss, e.val_f1,
                e.seconds);
  if (out.history.best_epoch > 0)
    std::printf("best: epoch %d, val F1 %.4f\n", out.history.best_epoch, out.history.best_val_f1);
  if (!out.checkpoint_path.empty()) std::printf("checkpoint: %s\n", out.checkpoint_path.c_str());
  return 0;
}

int cmd_search(const std::string& space_path) {
  sac::json j = sac::load_json_file(space_path);
  sac::SearchSpace space = sac::search_space_from_json(j);

  sac::ToySegmenterSpec model_spec;
  if (j.contains("model")) model_spec = sac::ToySegmenterSpec::from_json(j.at("model"));
  std::uint64_t model_seed = j.value("model_seed", 42ull);
  std::string out_dir = j.value("out_dir", std::string("search_out"));
  fs::create_directories(out_dir);

  sac::DatasetManifest train_m = sac::load_manifest(j.at("train_manifest").get<std::string>());
  sac::DatasetManifest val_m = sac::load_manifest(j.at("val_manifest").get<std::string>());
  auto train_data = sac::load_all_samples(train_m, model_spec.input_res);
  auto val_data = sac::load_all_samples(val_m, model_spec.input_res);
  sac::TuningPlan plan = j.contains("plan") ? sac::plan_from_json(j.at("plan"))
                                            : sac::make_plan("norm_only");

  double weight_decay = j.value("weight_decay", 5e-5);
  double tau = j.value("tau", 0.5);
  std::uint64_t train_seed = j.value("train_seed", 7ull);

  int trial_no = 0;
  auto run_trial = [&](const sac::TrialConfig& t) {
    sac::ToySegmenter model(model_spec, model_seed);  // fresh copy of the same initial state
    sac::TrainConfig cfg;
    cfg.epochs = space.trial_epochs;
    cfg.base_lr = t.lr;
    cfg.batch_size = t.batch;
    cfg.weight_decay = weight_decay;
    cfg.seed = train_seed;
    cfg.tau = tau;
    std::printf("trial %2d: loss=%s lambda=%g lr=%g batch=%d ... ", trial_no++,
                sac::loss_kind_name(t.loss.kind), t.loss.lambda, t.lr, t.batch);
    std::fflush(stdout);
    sac::TrainingHistory h = sac::train(model, plan, t.loss, train_data, val_data, cfg);
    std::printf("val F1 %.4f\n", h.best_val_f1);
    return h.best_val_f1;
  };

  sac::SearchResult res = sac::run_search(space, run_trial);
  sac::write_trials_csv((fs::path(out_dir) / "trials.csv").string(), res);

  const auto& best = res.best();
  sac::json bj = {{"trial", best.index},
                  {"loss", sac::loss_form_to_json(best.config.loss)},
                  {"lr", best.config.lr},
                  {"batch", best.config.batch},
                  {"val_f1", best.val_f1}};
  std::ofstream bout(fs::path(out_dir) / "best.json");
  bout << bj.dump(2) << "\n";
  std::printf("best trial %d: loss=%s lambda=%g lr=%g batch=%d val F1 %.4f\n", best.index,
              sac::loss_kind_name(best.config.loss.kind), best.config.loss.lambda, best.config.lr,
              best.config.batch, best.val_f1);
  std::printf("results: %s/trials.csv\n", out_dir.c_str());
  return 0;
}

void print_reference_rows(const std::string& dataset) {
  std::string path = sac::default_reference_path();
  if (!fs::exists(path)) return;
  auto rows = sac::load_reference_rows(path);
  bool header = false;
  for (const auto& r : rows) {
    if (!header) {
      std::printf("published reference rows (full-scale, not desk-reproducible):\n");
      header = true;
    }
    std::printf("  %-24s %-20s F1 %6.2f  IoU %6.2f%s\n", r.model.c_str(), r.dataset.c_str(), r.f1,
                r.iou, r.flagged("inconsistent_in_source") ? "  [inconsistent in source]" : "");
  }
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path, double tau,
             const std::string& out_csv, bool macro, bool show_reference) {
  sac::LoadedCheckpoint lc = sac::load_checkpoint(ckpt);
  sac::DatasetManifest m = sac::load_manifest(manifest_path);
  std::string plan_desc =
      lc.model->plan_applied() ? lc.model->plan().describe() : std::string("none");
  sac::MetricReport rep = sac::evaluate_dataset(*lc.model, m, tau, "toy-segmenter", plan_desc);
  std::printf("%s\n%s\n", sac::report_csv_header().c_str(),
              sac::report_csv_row(rep, macro).c_str());
  if (!out_csv.empty()) {
    sac::write_report_csv(out_csv, {rep}, macro);
    std::printf("wrote %s\n", out_csv.c_str());
  }
  if (show_reference) print_reference_rows(m.name);
  return 0;
}

int cmd_zeroshot(const std::string& ckpt, const std::vector<std::string>& manifest_paths, double tau,
                 const std::string& out_csv) {
  sac::LoadedCheckpoint lc = sac::load_checkpoint(ckpt);
  std::vector<sac::DatasetManifest> manifests;
  for (const auto& p : manifest_paths) manifests.push_back(sac::load_manifest(p));
  std::string plan_desc =
      lc.model->plan_applied() ? lc.model->plan().describe() : std::string("none");
  sac::ZeroShotResult zs = sac::zero_shot_suite(*lc.model, manifests, tau, "toy-segmenter", plan_desc);

  std::printf("%s\n", sac::report_csv_header().c_str());
  for (const auto& r : zs.reports) std::printf("%s\n", sac::report_csv_row(r).c_str());
  std::printf("aggregate: F1 %.2f±%.2f  IoU %.2f±%.2f (percent, population std over %zu datasets)\n",
              100.0 * zs.agg.mean_f1, 100.0 * zs.agg.std_f1, 100.0 * zs.agg.mean_iou,
              100.0 * zs.agg.std_iou, zs.reports.size());
  if (!out_csv.empty()) {
    sac::write_report_csv(out_csv, zs.reports);
    std::ofstream agg(out_csv + ".aggregate.csv", std::ios::binary);
    agg << "metric,mean,std\n";
    agg << "f1," << sac::percent2(zs.agg.mean_f1) << "," << sac::percent2(zs.agg.std_f1) << "\n";
    agg << "iou," << sac::percent2(zs.agg.mean_iou) << "," << sac::percent2(zs.agg.std_iou) << "\n";
    std::printf("wrote %s and %s.aggregate.csv\n", out_csv.c_str(), out_csv.c_str());
  }
  return 0;
}

int cmd_panels(const std::string& ckpt, const std::string& manifest_path, const std::string& out_dir,
               double tau, int limit) {
  sac::LoadedCheckpoint lc = sac::load_checkpoint(ckpt);
  sac::DatasetManifest m = sac::load_manifest(manifest_path);
  std::vector<sac::ImageSample> samples;
  size_t n = std::min<size_t>(m.entries.size(), static_cast<size_t>(limit));
  for (size_t i = 0; i < n; ++i)
    samples.push_back(sac::load_sample(m, i, lc.model->spec().input_res));
  size_t panes = sac::export_qualitative(*lc.model, samples, tau, out_dir);
  std::printf("wrote %zu panes (%zu samples x 5) under %s\n", panes, samples.size(),
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selective fine-tuning toolkit for crack segmentation"};
  app.require_subcommand(1);

  // audit
  std::string spec_path, strategy = "norm_only";
  int rank = 0, last_k = 0;
  std::vector<std::string> sites;
  bool verbose = false;
  auto* audit = app.add_subcommand("audit", "parameter budget for a tuning plan");
  audit->add_option("--spec", spec_path, "architecture spec or toy model spec (JSON)")->required();
  audit->add_option("--plan", strategy, "strategy: norm_only|decoder_only|lora|full|composite_cracksam|none");
  audit->add_option("--rank", rank, "LoRA rank");
  audit->add_option("--site", sites, "LoRA site tag (attention-qkv, mlp-linear2); repeatable");
  audit->add_option("--last-k", last_k, "restrict LoRA sites to the last k blocks (0 = all)");
  audit->add_flag("--breakdown", verbose, "print per-group breakdown");

  // synth
  int n = 200, size = 64;
  std::uint64_t seed = 7;
  std::string out_dir, ds_name = "synthetic-cracks", split = "train";
  auto* synth = app.add_subcommand("synth", "generate a synthetic crack dataset");
  synth->add_option("--n", n, "number of image/mask pairs")->required();
  synth->add_option("--size", size, "square resolution (default 64)");
  synth->add_option("--seed", seed, "generator seed")->required();
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--name", ds_name, "dataset name");
  synth->add_option("--split", split, "split tag: train|val|test|zeroshot");

  // train
  std::string config_path;
  auto* train = app.add_subcommand("train", "fine-tune under a plan from a config file");
  train->add_option("--config", config_path, "training config (JSON)")->required();

  // search
  std::string space_path;
  auto* search = app.add_subcommand("search", "random-search hyperparameters");
  search->add_option("--space", space_path, "search space (JSON)")->required();

  // eval
  std::string ckpt, manifest_path, out_csv;
  double tau = 0.5;
  bool macro = false, no_reference = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--tau", tau, "binarization threshold (default 0.5)");
  eval->add_option("--out", out_csv, "write metrics CSV here");
  eval->add_flag("--macro", macro, "report per-image macro averages instead of pooled micro");
  eval->add_flag("--no-reference", no_reference, "skip the published reference table");

  // zeroshot
  std::vector<std::string> manifest_paths;
  std::string zs_ckpt, zs_out;
  double zs_tau = 0.5;
  auto* zeroshot = app.add_subcommand("zeroshot", "zero-shot suite over held-out datasets");
  zeroshot->add_option("--ckpt", zs_ckpt, "checkpoint file")->required();
  zeroshot->add_option("--manifests", manifest_paths, "two or more manifests")->required()->expected(-2);
  zeroshot->add_option("--tau", zs_tau, "binarization threshold");
  zeroshot->add_option("--out", zs_out, "write metrics CSV here");

  // panels
  std::string p_ckpt, p_manifest, p_out;
  double p_tau = 0.5;
  int p_limit = 8;
  auto* panels = app.add_subcommand("panels", "export qualitative five-pane panels");
  panels->add_option("--ckpt", p_ckpt, "checkpoint file")->required();
  panels->add_option("--manifest", p_manifest, "dataset manifest")->required();
  panels->add_option("--out", p_out, "output directory")->required();
  panels->add_option("--tau", p_tau, "binarization threshold");
  panels->add_option("--limit", p_limit, "max samples to export (default 8)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (audit->parsed()) return cmd_audit(spec_path, strategy, rank, sites, last_k, verbose);
    if (synth->parsed()) return cmd_synth(n, size, seed, out_dir, ds_name, split);
    if (train->parsed()) return cmd_train(config_path);
    if (search->parsed()) return cmd_search(space_path);
    if (eval->parsed()) return cmd_eval(ckpt, manifest_path, tau, out_csv, macro, !no_reference);
    if (zeroshot->parsed()) return cmd_zeroshot(zs_ckpt, manifest_paths, zs_tau, zs_out);
    if (panels->parsed()) return cmd_panels(p_ckpt, p_manifest, p_out, p_tau, p_limit);
  } catch (const sac::Error& e) {
    std::fprintf(stderr, "sac-kit: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sac-kit: %s\n", e.what());
    return 1;
  }
  return 0;
}
