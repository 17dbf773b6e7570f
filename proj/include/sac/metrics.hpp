#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sac/common.hpp"
#include "sac/tensor.hpp"

namespace sac {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct MetricValues {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

// pixel -> 1 iff prob > tau (strict)
inline Tensor binarize(const Tensor& prob, double tau) {
  require(tau > 0.0 && tau < 1.0, Errc::config, strf("tau must lie in (0,1), got %g", tau));
  Tensor out(prob.shape);
  for (size_t i = 0; i < prob.numel(); ++i) out[i] = prob[i] > tau ? 1.0 : 0.0;
  return out;
}

inline ConfusionCounts confusion(const Tensor& pred, const Tensor& gt) {
  require(pred.same_shape(gt), Errc::shape,
          "mask shapes differ: " + pred.shape_str() + " vs " + gt.shape_str());
  ConfusionCounts c;
  for (size_t i = 0; i < pred.numel(); ++i) {
    double p = pred[i], g = gt[i];
    require((p == 0.0 || p == 1.0) && (g == 0.0 || g == 1.0), Errc::shape, "masks must be binary");
    if (p == 1.0 && g == 1.0)
      ++c.tp;
    else if (p == 1.0)
      ++c.fp;
    else if (g == 1.0)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

// Pre = tp/(tp+fp), Re = tp/(tp+fn), F1 = harmonic mean, IoU = tp/(tp+fp+fn).
// Conventions: both masks empty -> all 1; tp = 0 with fp+fn > 0 -> all 0.
inline MetricValues compute_metrics(const ConfusionCounts& c) {
  MetricValues m;
  std::uint64_t unions = c.tp + c.fp + c.fn;
  if (unions == 0) {
    m.precision = m.recall = m.f1 = m.iou = 1.0;
    return m;
  }
  double tp = static_cast<double>(c.tp);
  m.precision = c.tp + c.fp > 0 ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn > 0 ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.iou = tp / static_cast<double>(unions);
  return m;
}

struct MetricAggregate {
  std::vector<std::pair<std::string, MetricValues>> rows;
  double mean_f1 = 0.0, std_f1 = 0.0;
  double mean_iou = 0.0, std_iou = 0.0;
};

// Cross-dataset mean and population standard deviation of F1 and IoU, in the
// units the rows carry.
inline MetricAggregate aggregate(const std::vector<std::pair<std::string, MetricValues>>& values) {
  require(!values.empty(), Errc::config, "aggregate over an empty list");
  MetricAggregate a;
  a.rows = values;
  double n = static_cast<double>(values.size());
  for (const auto& [name, v] : values) {
    a.mean_f1 += v.f1;
    a.mean_iou += v.iou;
  }
  a.mean_f1 /= n;
  a.mean_iou /= n;
  for (const auto& [name, v] : values) {
    a.std_f1 += (v.f1 - a.mean_f1) * (v.f1 - a.mean_f1);
    a.std_iou += (v.iou - a.mean_iou) * (v.iou - a.mean_iou);
  }
  a.std_f1 = std::sqrt(a.std_f1 / n);
  a.std_iou = std::sqrt(a.std_iou / n);
  return a;
}

inline std::string percent2(double fraction) { return strf("%.2f", 100.0 * fraction); }

}  // namespace sac
