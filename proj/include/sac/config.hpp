#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/common.hpp"
#include "sac/dataset.hpp"
#include "sac/eval.hpp"
#include "sac/losses.hpp"
#include "sac/model.hpp"
#include "sac/plan.hpp"
#include "sac/search.hpp"
#include "sac/train.hpp"

namespace sac {

inline LossForm loss_form_from_json(const json& j) {
  LossForm f;
  try {
    f.kind = parse_loss_kind(j.at("kind").get<std::string>());
    if (j.contains("lambda")) f.lambda = j.at("lambda").get<double>();
    if (j.contains("reduction"))
      f.reduction = j.at("reduction").get<std::string>() == "sum" ? Reduction::sum : Reduction::mean;
    if (j.contains("smooth")) f.smooth = j.at("smooth").get<double>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("loss form: ") + e.what());
  }
  f.validate();
  return f;
}

inline json loss_form_to_json(const LossForm& f) {
  return json{{"kind", loss_kind_name(f.kind)},
              {"lambda", f.lambda},
              {"reduction", f.reduction == Reduction::sum ? "sum" : "mean"},
              {"smooth", f.smooth}};
}

// Everything one training run needs. File schema documented in the README.
struct TrainJob {
  ToySegmenterSpec model_spec;
  std::uint64_t model_seed = 42;
  TuningPlan plan;
  LossForm loss;
  TrainConfig config;
  std::string train_manifest;
  std::string val_manifest;
  std::string out_dir;
};

inline TrainJob train_job_from_json(const json& j) {
  TrainJob job;
  try {
    if (j.contains("model")) job.model_spec = ToySegmenterSpec::from_json(j.at("model"));
    if (j.contains("model_seed")) job.model_seed = j.at("model_seed").get<std::uint64_t>();
    job.plan = plan_from_json(j.at("plan"));
    job.loss = loss_form_from_json(j.at("loss"));
    if (j.contains("epochs")) job.config.epochs = j.at("epochs").get<int>();
    if (j.contains("lr")) job.config.base_lr = j.at("lr").get<double>();
    if (j.contains("batch")) job.config.batch_size = j.at("batch").get<int>();
    if (j.contains("weight_decay")) job.config.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("seed")) job.config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tau")) job.config.tau = j.at("tau").get<double>();
    job.train_manifest = j.at("train_manifest").get<std::string>();
    job.val_manifest = j.at("val_manifest").get<std::string>();
    if (j.contains("out_dir")) job.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("train config: ") + e.what());
  }
  job.config.validate();
  return job;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }
}

inline std::vector<ImageSample> load_all_samples(const DatasetManifest& m, int resolution) {
  std::vector<ImageSample> out;
  out.reserve(m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) out.push_back(load_sample(m, i, resolution));
  return out;
}

struct TrainOutcome {
  TrainingHistory history;
  std::string checkpoint_path;
  double untrained_val_f1 = 0.0;
};

inline void write_history_csv(const std::string& path, const TrainingHistory& h) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::output, "cannot write " + path);
  out << "epoch,mean_loss,val_f1,seconds\n";
  for (const auto& e : h.epochs)
    out << e.epoch << "," << strf("%.6f", e.mean_loss) << "," << strf("%.6f", e.val_f1) << ","
        << strf("%.3f", e.seconds) << "\n";
}

// Loads the manifests, builds the model, trains, persists best checkpoint and
// history under job.out_dir (when set).
inline TrainOutcome run_train_job(const TrainJob& job) {
  DatasetManifest train_m = load_manifest(job.train_manifest);
  DatasetManifest val_m = load_manifest(job.val_manifest);
  auto train_data = load_all_samples(train_m, job.model_spec.input_res);
  auto val_data = load_all_samples(val_m, job.model_spec.input_res);

  ToySegmenter model(job.model_spec, job.model_seed);
  model.apply_plan(job.plan, job.config.seed ^ 0x10ad5eedULL);

  TrainOutcome out;
  out.untrained_val_f1 = validate(model, val_data, job.config.tau);

  std::string ckpt;
  if (!job.out_dir.empty()) {
    std::filesystem::create_directories(job.out_dir);
    ckpt = (std::filesystem::path(job.out_dir) / "best.ckpt").string();
  }
  out.history = train(model, job.plan, job.loss, train_data, val_data, job.config, ckpt);
  out.checkpoint_path = out.history.checkpoint_path;
  if (!job.out_dir.empty())
    write_history_csv((std::filesystem::path(job.out_dir) / "history.csv").string(), out.history);
  return out;
}

inline void write_trials_csv(const std::string& path, const SearchResult& res) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::output, "cannot write " + path);
  out << "trial,loss,lambda,lr,batch,val_f1,status\n";
  for (const auto& t : res.trials)
    out << t.index << "," << loss_kind_name(t.config.loss.kind) << ","
        << strf("%g", t.config.loss.lambda) << "," << strf("%g", t.config.lr) << "," << t.config.batch
        << "," << (t.failed ? "" : strf("%.6f", t.val_f1)) << "," << (t.failed ? "failed" : "ok")
        << "\n";
}

}  // namespace sac
