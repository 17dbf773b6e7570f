#include <doctest.h>

#include <cmath>

#include "sac/metrics.hpp"
#include "sac/rng.hpp"

using namespace sac;

TEST_CASE("binarize rules") {
  Tensor p({3}, {0.4, 0.5, 0.6});
  Tensor b = binarize(p, 0.5);
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 0.0);  // strict inequality
  CHECK(b[2] == 1.0);

  Tensor hi({4}, 0.9);
  Tensor bh = binarize(hi, 0.5);
  for (size_t i = 0; i < bh.numel(); ++i) CHECK(bh[i] == 1.0);

  Tensor lo({4}, 0.99);
  Tensor bl = binarize(lo, 0.999);
  for (size_t i = 0; i < bl.numel(); ++i) CHECK(bl[i] == 0.0);

  CHECK_THROWS_AS(binarize(p, 0.0), Error);
  CHECK_THROWS_AS(binarize(p, 1.0), Error);
}

TEST_CASE("binarize is monotone in tau") {
  Rng rng(3);
  Tensor p({64});
  for (auto& v : p.data) v = rng.uniform();
  double taus[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  for (int i = 0; i + 1 < 5; ++i) {
    Tensor a = binarize(p, taus[i]);
    Tensor b = binarize(p, taus[i + 1]);
    for (size_t k = 0; k < p.numel(); ++k) CHECK(b[k] <= a[k]);  // raising tau never adds pixels
  }
}

TEST_CASE("confusion pixel enumeration") {
  // 4x4 masks from the worked example
  Tensor pred({4, 4}, 0.0), gt({4, 4}, 0.0);
  pred.data[0 * 4 + 0] = 1;
  pred.data[0 * 4 + 1] = 1;
  pred.data[1 * 4 + 1] = 1;
  gt.data[0 * 4 + 1] = 1;
  gt.data[1 * 4 + 1] = 1;
  gt.data[2 * 4 + 2] = 1;
  ConfusionCounts c = confusion(pred, gt);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 12);

  ConfusionCounts ident = confusion(gt, gt);
  CHECK(ident.fp == 0);
  CHECK(ident.fn == 0);

  Tensor zeros({4, 4}, 0.0);
  ConfusionCounts empty = confusion(zeros, gt);
  CHECK(empty.tp == 0);
  CHECK(empty.fp == 0);

  Tensor other({2, 8}, 0.0);
  CHECK_THROWS_AS(confusion(pred, other), Error);
}

TEST_CASE("metric hand values and conventions") {
  MetricValues m = compute_metrics({2, 1, 1, 12});
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.iou == doctest::Approx(0.5));

  MetricValues perfect = compute_metrics({5, 0, 0, 11});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.iou == 1.0);

  MetricValues vacuous = compute_metrics({0, 0, 0, 16});
  CHECK(vacuous.f1 == 1.0);
  CHECK(vacuous.iou == 1.0);

  MetricValues zero = compute_metrics({0, 3, 2, 11});
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);
  CHECK(zero.iou == 0.0);
}

TEST_CASE("f1 equals 2*iou/(1+iou) and dominates iou") {
  Rng rng(17);
  for (int it = 0; it < 20000; ++it) {
    ConfusionCounts c{rng.below(1000), rng.below(1000), rng.below(1000), rng.below(1000)};
    MetricValues m = compute_metrics(c);
    CHECK(std::abs(m.f1 - 2.0 * m.iou / (1.0 + m.iou)) < 1e-12);
    CHECK(m.f1 >= m.iou);
  }
}

TEST_CASE("metrics equal brute-force pixel oracle") {
  Rng rng(19);
  for (int it = 0; it < 50; ++it) {
    int h = 3 + static_cast<int>(rng.below(6)), w = 3 + static_cast<int>(rng.below(6));
    Tensor pred({h, w}), gt({h, w});
    for (auto& v : pred.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    for (auto& v : gt.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < pred.numel(); ++i) {
      if (pred[i] == 1 && gt[i] == 1) ++tp;
      if (pred[i] == 1 && gt[i] == 0) ++fp;
      if (pred[i] == 0 && gt[i] == 1) ++fn;
      if (pred[i] == 0 && gt[i] == 0) ++tn;
    }
    ConfusionCounts c = confusion(pred, gt);
    CHECK(c.tp == tp);
    CHECK(c.fp == fp);
    CHECK(c.fn == fn);
    CHECK(c.tn == tn);
    CHECK(c.total() == pred.numel());
    if (tp + fp > 0) {
      MetricValues m = compute_metrics(c);
      CHECK(std::abs(m.precision - static_cast<double>(tp) / (tp + fp)) < 1e-12);
    }
  }
}

TEST_CASE("pooled counts are shard-invariant") {
  Rng rng(29);
  Tensor pred({16, 16}), gt({16, 16});
  for (auto& v : pred.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  for (auto& v : gt.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  ConfusionCounts whole = confusion(pred, gt);
  // split rows into shards and pool
  ConfusionCounts pooled;
  for (int r = 0; r < 16; r += 4) {
    Tensor ps({4, 16}), gs({4, 16});
    for (int i = 0; i < 4 * 16; ++i) {
      ps[i] = pred.data[r * 16 + i];
      gs[i] = gt.data[r * 16 + i];
    }
    pooled += confusion(ps, gs);
  }
  CHECK(pooled.tp == whole.tp);
  CHECK(pooled.fp == whole.fp);
  CHECK(pooled.fn == whole.fn);
  CHECK(pooled.tn == whole.tn);
}

TEST_CASE("aggregate reproduces the published SAC zero-shot rows") {
  // percentages straight from the cross-dataset table
  std::vector<std::pair<std::string, MetricValues>> rows = {
      {"Road420", {0, 0, 64.22, 47.30}},
      {"Facade390", {0, 0, 61.74, 44.68}},
      {"Concrete3k", {0, 0, 75.63, 60.82}},
  };
  MetricAggregate a = aggregate(rows);
  CHECK(a.mean_f1 == doctest::Approx(67.20).epsilon(0.0002));
  CHECK(a.std_f1 == doctest::Approx(6.05).epsilon(0.002));
  CHECK(a.mean_iou == doctest::Approx(50.93).epsilon(0.0002));
  CHECK(a.std_iou == doctest::Approx(7.07).epsilon(0.002));

  // the sample-std convention would give 7.41, not 6.05 — population std it is
  double mean = (64.22 + 61.74 + 75.63) / 3.0;
  double ss = (64.22 - mean) * (64.22 - mean) + (61.74 - mean) * (61.74 - mean) +
              (75.63 - mean) * (75.63 - mean);
  CHECK(std::sqrt(ss / 2.0) == doctest::Approx(7.41).epsilon(0.01));

  std::vector<std::pair<std::string, MetricValues>> single = {{"only", {0, 0, 0.5, 0.4}}};
  MetricAggregate s = aggregate(single);
  CHECK(s.mean_f1 == 0.5);
  CHECK(s.std_f1 == 0.0);

  std::vector<std::pair<std::string, MetricValues>> two = {{"a", {0, 0, 0.4, 0.3}},
                                                           {"b", {0, 0, 0.6, 0.5}}};
  MetricAggregate t = aggregate(two);
  CHECK(t.mean_f1 == doctest::Approx(0.5));
  CHECK(t.std_f1 == doctest::Approx(0.1));

  CHECK_THROWS_AS(aggregate({}), Error);
}
