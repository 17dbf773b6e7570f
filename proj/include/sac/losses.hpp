#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "sac/common.hpp"
#include "sac/tensor.hpp"

namespace sac {

enum class LossKind { bce, dice, convex_hybrid, weighted_hybrid };
enum class Reduction { sum, mean };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::bce: return "bce";
    case LossKind::dice: return "dice";
    case LossKind::convex_hybrid: return "convex_hybrid";
    case LossKind::weighted_hybrid: return "weighted_hybrid";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "dice") return LossKind::dice;
  if (s == "convex_hybrid") return LossKind::convex_hybrid;
  if (s == "weighted_hybrid") return LossKind::weighted_hybrid;
  throw Error(Errc::config, "unknown loss kind '" + s + "'");
}

// Objective description. convex_hybrid = lambda*BCE + (1-lambda)*Dice with
// lambda in [0,1]; weighted_hybrid = BCE + lambda*Dice with lambda > 0.
struct LossForm {
  LossKind kind = LossKind::weighted_hybrid;
  double lambda = 0.0;
  Reduction reduction = Reduction::mean;  // BCE term
  double smooth = 1e-6;                   // Dice term

  void validate() const {
    if (kind == LossKind::convex_hybrid)
      require(lambda >= 0.0 && lambda <= 1.0, Errc::config,
              strf("convex hybrid needs lambda in [0,1], got %g", lambda));
    if (kind == LossKind::weighted_hybrid)
      require(lambda > 0.0, Errc::config, strf("weighted hybrid needs lambda > 0, got %g", lambda));
    require(smooth >= 0.0, Errc::config, "smooth must be non-negative");
  }
};

namespace detail {
constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline void check_pair(const Tensor& p, const Tensor& g) {
  require(p.same_shape(g), Errc::shape,
          "prediction and target shapes differ: " + p.shape_str() + " vs " + g.shape_str());
  for (double v : g.data)
    require(v == 0.0 || v == 1.0, Errc::shape, "target mask must be binary");
}
}  // namespace detail

// -sum[g*log(p) + (1-g)*log(1-p)]; mean divides by the pixel count.
// Probabilities are clamped away from 0 and 1 before the logarithms.
inline double bce_loss(const Tensor& p, const Tensor& g, Reduction reduction = Reduction::mean) {
  detail::check_pair(p, g);
  double acc = 0.0;
  for (size_t i = 0; i < p.numel(); ++i) {
    double pi = detail::clamp_prob(p[i]);
    acc -= g[i] * std::log(pi) + (1.0 - g[i]) * std::log(1.0 - pi);
  }
  return reduction == Reduction::mean ? acc / static_cast<double>(p.numel()) : acc;
}

// dL/dp. Outside the clamp band the derivative is taken at the clamped value.
inline Tensor bce_grad(const Tensor& p, const Tensor& g, Reduction reduction = Reduction::mean) {
  detail::check_pair(p, g);
  Tensor d(p.shape);
  double w = reduction == Reduction::mean ? 1.0 / static_cast<double>(p.numel()) : 1.0;
  for (size_t i = 0; i < p.numel(); ++i) {
    double pi = detail::clamp_prob(p[i]);
    d[i] = w * (-g[i] / pi + (1.0 - g[i]) / (1.0 - pi));
  }
  return d;
}

// 1 - (2*sum(p*g) + smooth) / (sum(p^2) + sum(g^2) + smooth)
inline double dice_loss(const Tensor& p, const Tensor& g, double smooth = 1e-6) {
  detail::check_pair(p, g);
  double inter = 0.0, pp = 0.0, gg = 0.0;
  for (size_t i = 0; i < p.numel(); ++i) {
    inter += p[i] * g[i];
    pp += p[i] * p[i];
    gg += g[i] * g[i];
  }
  double den = pp + gg + smooth;
  require(den > 0.0, Errc::degenerate, "dice loss undefined: both masks empty and smooth = 0");
  return 1.0 - (2.0 * inter + smooth) / den;
}

inline Tensor dice_grad(const Tensor& p, const Tensor& g, double smooth = 1e-6) {
  detail::check_pair(p, g);
  double inter = 0.0, pp = 0.0, gg = 0.0;
  for (size_t i = 0; i < p.numel(); ++i) {
    inter += p[i] * g[i];
    pp += p[i] * p[i];
    gg += g[i] * g[i];
  }
  double den = pp + gg + smooth;
  require(den > 0.0, Errc::degenerate, "dice loss undefined: both masks empty and smooth = 0");
  double num = 2.0 * inter + smooth;
  Tensor d(p.shape);
  // d/dp_i [1 - num/den] = (num * 2p_i - 2g_i * den) / den^2
  for (size_t i = 0; i < p.numel(); ++i) d[i] = (num * 2.0 * p[i] - 2.0 * g[i] * den) / (den * den);
  return d;
}

inline double hybrid_loss(const LossForm& form, const Tensor& p, const Tensor& g) {
  form.validate();
  switch (form.kind) {
    case LossKind::bce: return bce_loss(p, g, form.reduction);
    case LossKind::dice: return dice_loss(p, g, form.smooth);
    case LossKind::convex_hybrid:
      if (form.lambda == 0.0) return dice_loss(p, g, form.smooth);
      if (form.lambda == 1.0) return bce_loss(p, g, form.reduction);
      return form.lambda * bce_loss(p, g, form.reduction) +
             (1.0 - form.lambda) * dice_loss(p, g, form.smooth);
    case LossKind::weighted_hybrid:
      return bce_loss(p, g, form.reduction) + form.lambda * dice_loss(p, g, form.smooth);
  }
  throw Error(Errc::config, "unreachable loss kind");
}

inline Tensor hybrid_grad(const LossForm& form, const Tensor& p, const Tensor& g) {
  form.validate();
  switch (form.kind) {
    case LossKind::bce: return bce_grad(p, g, form.reduction);
    case LossKind::dice: return dice_grad(p, g, form.smooth);
    case LossKind::convex_hybrid: {
      if (form.lambda == 0.0) return dice_grad(p, g, form.smooth);
      if (form.lambda == 1.0) return bce_grad(p, g, form.reduction);
      Tensor db = bce_grad(p, g, form.reduction);
      Tensor dd = dice_grad(p, g, form.smooth);
      for (size_t i = 0; i < db.numel(); ++i) db[i] = form.lambda * db[i] + (1.0 - form.lambda) * dd[i];
      return db;
    }
    case LossKind::weighted_hybrid: {
      Tensor db = bce_grad(p, g, form.reduction);
      Tensor dd = dice_grad(p, g, form.smooth);
      for (size_t i = 0; i < db.numel(); ++i) db[i] += form.lambda * dd[i];
      return db;
    }
  }
  throw Error(Errc::config, "unreachable loss kind");
}

}  // namespace sac
