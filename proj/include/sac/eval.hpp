#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/common.hpp"
#include "sac/dataset.hpp"
#include "sac/image.hpp"
#include "sac/manifest.hpp"
#include "sac/metrics.hpp"
#include "sac/model.hpp"

namespace sac {

struct MetricReport {
  std::string dataset;
  std::string model_name;
  std::string plan;
  double tau = 0.5;
  ConfusionCounts pooled;
  MetricValues micro;  // fractions; pooled confusion over every pixel
  MetricValues macro;  // mean of per-image metrics
  size_t n_images = 0;
};

// Inference over every manifest entry, confusion pooled across all pixels.
inline MetricReport evaluate_dataset(ToySegmenter& model, const DatasetManifest& manifest,
                                     double tau, const std::string& model_name = "toy",
                                     const std::string& plan_desc = "-") {
  require(!manifest.entries.empty(), Errc::config, "manifest " + manifest.name + " is empty");
  require(tau > 0 && tau < 1, Errc::config, "tau must lie in (0,1)");
  model.set_train(false);
  MetricReport rep;
  rep.dataset = manifest.name;
  rep.model_name = model_name;
  rep.plan = plan_desc;
  rep.tau = tau;
  rep.n_images = manifest.entries.size();
  double mp = 0, mr = 0, mf = 0, mi = 0;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    ImageSample s = load_sample(manifest, i, model.spec().input_res);
    Tensor prob = model.forward(s.image);
    ConfusionCounts c = confusion(binarize(prob, tau), s.mask);
    rep.pooled += c;
    MetricValues v = compute_metrics(c);
    mp += v.precision;
    mr += v.recall;
    mf += v.f1;
    mi += v.iou;
  }
  rep.micro = compute_metrics(rep.pooled);
  double n = static_cast<double>(rep.n_images);
  rep.macro = {mp / n, mr / n, mf / n, mi / n};
  model.set_train(true);
  return rep;
}

inline std::string report_csv_header() { return "dataset,model,plan,precision,recall,f1,iou"; }

inline std::string report_csv_row(const MetricReport& r, bool macro = false) {
  const MetricValues& v = macro ? r.macro : r.micro;
  return r.dataset + "," + r.model_name + "," + r.plan + "," + percent2(v.precision) + "," +
         percent2(v.recall) + "," + percent2(v.f1) + "," + percent2(v.iou);
}

inline void write_report_csv(const std::string& path, const std::vector<MetricReport>& reports,
                             bool macro = false) {
  std::ofstream out(path, std::ios::binary);  // byte-stable across platforms
  require(out.good(), Errc::output, "cannot write report " + path);
  out << report_csv_header() << "\n";
  for (const auto& r : reports) out << report_csv_row(r, macro) << "\n";
}

struct ZeroShotResult {
  std::vector<MetricReport> reports;
  MetricAggregate agg;  // over micro F1/IoU, fraction units
};

// Cross-dataset evaluation with mean +- population std aggregation. Manifests
// that took part in training (train or val splits) are rejected.
inline ZeroShotResult zero_shot_suite(ToySegmenter& model, const std::vector<DatasetManifest>& manifests,
                                      double tau, const std::string& model_name = "toy",
                                      const std::string& plan_desc = "-") {
  require(manifests.size() >= 2, Errc::config, "zero-shot suite needs at least two datasets");
  for (const auto& m : manifests)
    require(m.split == Split::zeroshot || m.split == Split::test, Errc::contamination,
            "manifest " + m.name + " has split '" + split_name(m.split) +
                "', which participated in training");
  ZeroShotResult res;
  std::vector<std::pair<std::string, MetricValues>> rows;
  for (const auto& m : manifests) {
    res.reports.push_back(evaluate_dataset(model, m, tau, model_name, plan_desc));
    rows.emplace_back(m.name, res.reports.back().micro);
  }
  res.agg = aggregate(rows);
  return res;
}

// ---------------------------------------------------------------------------
// Qualitative panels: input | ground truth | probability | overlay | binary
// ---------------------------------------------------------------------------

namespace detail {

inline Image tensor_to_gray_image(const Tensor& t) {
  int h = t.shape[0], w = t.shape[1];
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 255.0 * t.data[static_cast<size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  return img;
}

inline Image sample_to_image(const Tensor& img_hwc) {
  int h = img_hwc.shape[0], w = img_hwc.shape[1];
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = 255.0 * img_hwc.data[(static_cast<size_t>(y) * w + x) * 3 + c];
  return img;
}

inline Image hstack(const std::vector<Image>& panes) {
  int h = panes[0].h, w = 0;
  for (const auto& p : panes) w += p.w;
  Image out(h, w, 3);
  int xoff = 0;
  for (const auto& p : panes) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < p.w; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, xoff + x, c) = p.at(y, x, c);
    xoff += p.w;
  }
  return out;
}

}  // namespace detail

// Writes the five panes per sample plus a stacked row image; the probability
// is rendered as a red overlay (alpha 0.5) on the grayscale input.
inline size_t export_qualitative(ToySegmenter& model, const std::vector<ImageSample>& samples,
                                 double tau, const std::string& out_dir) {
  require(tau > 0 && tau < 1, Errc::config, "tau must lie in (0,1)");
  std::filesystem::create_directories(out_dir);
  require(std::filesystem::is_directory(out_dir), Errc::output, "cannot create " + out_dir);
  model.set_train(false);
  size_t written = 0;
  for (const auto& s : samples) {
    Tensor prob = model.forward(s.image);
    Tensor bin = binarize(prob, tau);

    Image input = detail::sample_to_image(s.image);
    Image gt = detail::tensor_to_gray_image(s.mask);
    Image pm = detail::tensor_to_gray_image(prob);
    Image binim = detail::tensor_to_gray_image(bin);

    int h = input.h, w = input.w;
    Image overlay(h, w, 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double gray = 0.299 * input.at(y, x, 0) + 0.587 * input.at(y, x, 1) + 0.114 * input.at(y, x, 2);
        double p = prob.data[static_cast<size_t>(y) * w + x];
        overlay.at(y, x, 0) = 0.5 * gray + 0.5 * 255.0 * p;
        overlay.at(y, x, 1) = 0.5 * gray;
        overlay.at(y, x, 2) = 0.5 * gray;
      }

    auto path = [&](const char* pane) {
      return (std::filesystem::path(out_dir) / (s.id + "_" + pane + ".png")).string();
    };
    save_png(path("input"), input);
    save_png(path("gt"), gt);
    save_png(path("prob"), pm);
    save_png(path("overlay"), overlay);
    save_png(path("binary"), binim);
    save_png(path("row"), detail::hstack({input, gt, pm, overlay, binim}));
    written += 5;
  }
  model.set_train(true);
  return written;
}

// ---------------------------------------------------------------------------
// Published reference rows (full-scale results; not reproducible at desk
// scale). Rows flagged inconsistent_in_source are display-only.
// ---------------------------------------------------------------------------

struct ReferenceRow {
  std::string model;
  std::string dataset;
  double f1 = 0.0;   // percent
  double iou = 0.0;  // percent
  std::vector<std::string> flags;

  bool flagged(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

inline std::vector<ReferenceRow> load_reference_rows(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open reference results " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }
  std::vector<ReferenceRow> rows;
  for (const auto& jr : j.at("rows")) {
    ReferenceRow r;
    r.model = jr.at("model").get<std::string>();
    r.dataset = jr.at("dataset").get<std::string>();
    r.f1 = jr.at("f1").get<double>();
    r.iou = jr.at("iou").get<double>();
    if (jr.contains("flags")) r.flags = jr.at("flags").get<std::vector<std::string>>();
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string default_reference_path() {
#ifdef SAC_DATA_DIR
  return std::string(SAC_DATA_DIR) + "/reference_results.json";
#else
  return "data/reference_results.json";
#endif
}

}  // namespace sac
