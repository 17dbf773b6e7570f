#include <doctest.h>

#include <cmath>

#include "sac/losses.hpp"
#include "sac/rng.hpp"

using namespace sac;

namespace {

Tensor tvec(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

// direct elementwise-summation oracles, independent of the library path
double bce_oracle(const Tensor& p, const Tensor& g, bool mean) {
  double acc = 0.0;
  for (size_t i = 0; i < p.numel(); ++i)
    acc -= g[i] * std::log(p[i]) + (1.0 - g[i]) * std::log(1.0 - p[i]);
  return mean ? acc / static_cast<double>(p.numel()) : acc;
}

double dice_oracle(const Tensor& p, const Tensor& g, double smooth) {
  double num = 0, dp = 0, dg = 0;
  for (size_t i = 0; i < p.numel(); ++i) {
    num += p[i] * g[i];
    dp += p[i] * p[i];
    dg += g[i] * g[i];
  }
  return 1.0 - (2.0 * num + smooth) / (dp + dg + smooth);
}

void random_pair(Rng& rng, int n, Tensor& p, Tensor& g) {
  p = Tensor({n});
  g = Tensor({n});
  for (int i = 0; i < n; ++i) {
    p[i] = rng.uniform(0.01, 0.99);
    g[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
}

}  // namespace

TEST_CASE("bce hand values") {
  CHECK(bce_loss(tvec({0.5}), tvec({1.0}), Reduction::sum) == doctest::Approx(0.693147).epsilon(1e-5));
  CHECK(bce_loss(tvec({0.5, 0.5}), tvec({1.0, 0.0}), Reduction::sum) ==
        doctest::Approx(1.386294).epsilon(1e-5));
  CHECK(bce_loss(tvec({0.5, 0.5}), tvec({1.0, 0.0}), Reduction::mean) ==
        doctest::Approx(0.693147).epsilon(1e-5));
}

TEST_CASE("bce approaches zero on perfect predictions") {
  Tensor g = tvec({1.0, 0.0, 1.0});
  Tensor p = tvec({1.0, 0.0, 1.0});  // clamped internally to 1-eps / eps
  CHECK(bce_loss(p, g, Reduction::mean) < 1e-5);
}

TEST_CASE("dice hand values") {
  // p = g binary, smooth 0 -> 0
  Tensor g = tvec({1, 0, 1, 0});
  CHECK(dice_loss(g, g, 0.0) == doctest::Approx(0.0));
  // p uniform 0.5 on N=4, one positive
  Tensor p = tvec({0.5, 0.5, 0.5, 0.5});
  Tensor g2 = tvec({1, 0, 0, 0});
  CHECK(dice_loss(p, g2, 0.0) == doctest::Approx(0.5));
  // zero overlap
  Tensor z = tvec({0, 0, 0, 0});
  Tensor g3 = tvec({1, 1, 0, 0});
  CHECK(dice_loss(z, g3, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("dice degenerate and bounds") {
  Tensor z = tvec({0, 0});
  CHECK_THROWS_AS(dice_loss(z, z, 0.0), Error);
  CHECK(dice_loss(z, z, 1e-6) == doctest::Approx(0.0));  // smoothed 0/0 -> no loss

  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    Tensor p, g;
    random_pair(rng, 32, p, g);
    double d = dice_loss(p, g, rng.uniform() < 0.5 ? 0.0 : 1e-6);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }
}

TEST_CASE("dice symmetry for binary p") {
  Rng rng(5);
  for (int it = 0; it < 100; ++it) {
    Tensor p({16}), g({16});
    for (int i = 0; i < 16; ++i) {
      p[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
      g[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    if (dice_oracle(p, g, 1e-6) >= 0) {
      CHECK(dice_loss(p, g, 1e-6) == doctest::Approx(dice_loss(g, p, 1e-6)).epsilon(1e-12));
    }
  }
}

TEST_CASE("losses match direct-summation oracles") {
  Rng rng(23);
  for (int it = 0; it < 200; ++it) {
    Tensor p, g;
    random_pair(rng, 256, p, g);
    CHECK(bce_loss(p, g, Reduction::sum) == doctest::Approx(bce_oracle(p, g, false)).epsilon(1e-9));
    CHECK(bce_loss(p, g, Reduction::mean) == doctest::Approx(bce_oracle(p, g, true)).epsilon(1e-9));
    CHECK(dice_loss(p, g, 1e-6) == doctest::Approx(dice_oracle(p, g, 1e-6)).epsilon(1e-9));
  }
}

TEST_CASE("hybrid endpoints and composition") {
  Rng rng(31);
  Tensor p, g;
  random_pair(rng, 64, p, g);

  LossForm convex0{LossKind::convex_hybrid, 0.0, Reduction::mean, 1e-6};
  CHECK(hybrid_loss(convex0, p, g) == dice_loss(p, g, 1e-6));
  LossForm convex1{LossKind::convex_hybrid, 1.0, Reduction::mean, 1e-6};
  CHECK(hybrid_loss(convex1, p, g) == bce_loss(p, g, Reduction::mean));

  // weighted hybrid, lambda = 0.65, hand-composed value from the spec example
  Tensor p2 = tvec({0.5, 0.5});
  Tensor g2 = tvec({1.0, 0.0});
  LossForm wh{LossKind::weighted_hybrid, 0.65, Reduction::mean, 0.0};
  CHECK(hybrid_loss(wh, p2, g2) == doctest::Approx(0.909814).epsilon(1e-5));
}

TEST_CASE("convex hybrid is linear in lambda") {
  Rng rng(37);
  Tensor p, g;
  random_pair(rng, 64, p, g);
  double at0 = hybrid_loss({LossKind::convex_hybrid, 0.0, Reduction::mean, 1e-6}, p, g);
  double at1 = hybrid_loss({LossKind::convex_hybrid, 1.0, Reduction::mean, 1e-6}, p, g);
  for (double lam : {0.1, 0.25, 0.5, 0.65, 0.9}) {
    double v = hybrid_loss({LossKind::convex_hybrid, lam, Reduction::mean, 1e-6}, p, g);
    CHECK(v == doctest::Approx(lam * at1 + (1 - lam) * at0).epsilon(1e-10));
  }
}

TEST_CASE("loss form validation") {
  LossForm bad{LossKind::convex_hybrid, 1.5, Reduction::mean, 1e-6};
  CHECK_THROWS_AS(bad.validate(), Error);
  LossForm bad2{LossKind::weighted_hybrid, 0.0, Reduction::mean, 1e-6};
  CHECK_THROWS_AS(bad2.validate(), Error);
  CHECK_THROWS_AS(bce_loss(tvec({0.5}), tvec({0.5})), Error);         // non-binary target
  CHECK_THROWS_AS(bce_loss(tvec({0.5, 0.5}), tvec({1.0})), Error);    // shape mismatch
}

TEST_CASE("analytic loss gradients match central differences") {
  Rng rng(41);
  const double h = 1e-6;
  for (int inst = 0; inst < 20; ++inst) {
    Tensor p, g;
    random_pair(rng, 64, p, g);
    for (double& v : p.data) v = std::clamp(v, 0.05, 0.95);  // stay away from clamp boundaries

    Tensor db = bce_grad(p, g, Reduction::mean);
    Tensor dd = dice_grad(p, g, 1e-6);
    for (int i = 0; i < 8; ++i) {
      size_t k = rng.below(p.numel());
      Tensor pp = p, pm = p;
      pp[k] += h;
      pm[k] -= h;
      double fd_b =
          (bce_loss(pp, g, Reduction::mean) - bce_loss(pm, g, Reduction::mean)) / (2 * h);
      double fd_d = (dice_loss(pp, g, 1e-6) - dice_loss(pm, g, 1e-6)) / (2 * h);
      CHECK(std::abs(db[k] - fd_b) / std::max({std::abs(fd_b), std::abs(db[k]), 1.0}) < 1e-4);
      CHECK(std::abs(dd[k] - fd_d) / std::max({std::abs(fd_d), std::abs(dd[k]), 1.0}) < 1e-4);
    }
  }
}
