#pragma once

#include <cmath>
#include <string>

#include "sac/common.hpp"
#include "sac/tensor.hpp"

namespace sac {

enum class NormKind { layer, batch, group };

inline const char* norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::layer: return "layer";
    case NormKind::batch: return "batch";
    case NormKind::group: return "group";
  }
  return "?";
}

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "layer") return NormKind::layer;
  if (s == "batch") return NormKind::batch;
  if (s == "group") return NormKind::group;
  throw Error(Errc::config, "unknown norm kind '" + s + "'");
}

// Per-feature affine parameters of the normalization transform.
struct NormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  double eps = 1e-5;
  NormKind kind = NormKind::layer;
  int groups = 1;

  static NormParams identity(int channels, NormKind kind = NormKind::layer, double eps = 1e-5,
                             int groups = 1) {
    NormParams p;
    p.gamma = Tensor({channels}, 1.0);
    p.beta = Tensor({channels}, 0.0);
    p.eps = eps;
    p.kind = kind;
    p.groups = groups;
    p.validate(channels);
    return p;
  }

  void validate(int channels) const {
    require(gamma.numel() == beta.numel(), Errc::shape, "gamma and beta lengths differ");
    require(static_cast<int>(gamma.numel()) == channels, Errc::shape, "affine length != channels");
    require(eps > 0.0, Errc::config, "eps must be positive");
    if (kind == NormKind::group)
      require(groups > 0 && channels % groups == 0, Errc::config, "groups must divide channels");
  }
};

struct Moments {
  Tensor mu;
  Tensor sigma;  // population standard deviation
};

namespace detail {
inline void mean_std(const double* v, size_t n, double stride, size_t count, double& mu, double& sigma) = delete;
}

// Mean / population std over the reduction axes implied by the kind.
//   batch : x is [N, C, S]  ->  mu, sigma have shape [C]   (reduce N and S per channel)
//   layer : x is [R, C]     ->  mu, sigma have shape [R]   (reduce features per position)
//   group : x is [N, C, S]  ->  mu, sigma have shape [N, G] (reduce C/G channels and S)
inline Moments compute_stats(const Tensor& x, NormKind kind, int groups = 1) {
  Moments m;
  if (kind == NormKind::layer) {
    require(x.shape.size() == 2, Errc::shape, "layer stats expect [positions, features]");
    int r = x.shape[0], c = x.shape[1];
    require(r > 0 && c > 0, Errc::degenerate, "empty reduction axis");
    m.mu = Tensor({r});
    m.sigma = Tensor({r});
    for (int i = 0; i < r; ++i) {
      const double* row = &x.data[static_cast<size_t>(i) * c];
      double mu = 0.0;
      for (int j = 0; j < c; ++j) mu += row[j];
      mu /= c;
      double var = 0.0;
      for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
      m.mu[i] = mu;
      m.sigma[i] = std::sqrt(var / c);
    }
    return m;
  }
  require(x.shape.size() == 3, Errc::shape, "batch/group stats expect [batch, channels, spatial]");
  int n = x.shape[0], c = x.shape[1], s = x.shape[2];
  require(n > 0 && c > 0 && s > 0, Errc::degenerate, "empty reduction axis");
  if (kind == NormKind::batch) {
    m.mu = Tensor({c});
    m.sigma = Tensor({c});
    for (int ch = 0; ch < c; ++ch) {
      double mu = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* row = &x.data[(static_cast<size_t>(b) * c + ch) * s];
        for (int i = 0; i < s; ++i) mu += row[i];
      }
      size_t cnt = static_cast<size_t>(n) * s;
      mu /= static_cast<double>(cnt);
      double var = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* row = &x.data[(static_cast<size_t>(b) * c + ch) * s];
        for (int i = 0; i < s; ++i) var += (row[i] - mu) * (row[i] - mu);
      }
      m.mu[ch] = mu;
      m.sigma[ch] = std::sqrt(var / static_cast<double>(cnt));
    }
    return m;
  }
  // group
  require(groups > 0 && c % groups == 0, Errc::config, "groups must divide channels");
  int per = c / groups;
  m.mu = Tensor({n, groups});
  m.sigma = Tensor({n, groups});
  for (int b = 0; b < n; ++b) {
    for (int g = 0; g < groups; ++g) {
      double mu = 0.0;
      for (int ch = g * per; ch < (g + 1) * per; ++ch) {
        const double* row = &x.data[(static_cast<size_t>(b) * c + ch) * s];
        for (int i = 0; i < s; ++i) mu += row[i];
      }
      size_t cnt = static_cast<size_t>(per) * s;
      mu /= static_cast<double>(cnt);
      double var = 0.0;
      for (int ch = g * per; ch < (g + 1) * per; ++ch) {
        const double* row = &x.data[(static_cast<size_t>(b) * c + ch) * s];
        for (int i = 0; i < s; ++i) var += (row[i] - mu) * (row[i] - mu);
      }
      m.mu.at(b, g) = mu;
      m.sigma.at(b, g) = std::sqrt(var / static_cast<double>(cnt));
    }
  }
  return m;
}

// y = gamma * (x - mu) / (sigma + eps) + beta, with mu/sigma taken as given.
// Layouts follow compute_stats. Note eps is added to sigma itself, not to the
// variance under the square root.
inline Tensor normalize_affine(const Tensor& x, const Moments& m, const NormParams& p) {
  Tensor y(x.shape);
  if (p.kind == NormKind::layer) {
    require(x.shape.size() == 2, Errc::shape, "layer normalize expects [positions, features]");
    int r = x.shape[0], c = x.shape[1];
    require(static_cast<int>(m.mu.numel()) == r && static_cast<int>(m.sigma.numel()) == r,
            Errc::shape, "moments do not broadcast against x");
    p.validate(c);
    for (int i = 0; i < r; ++i) {
      double denom = m.sigma[i] + p.eps;
      for (int j = 0; j < c; ++j) {
        size_t k = static_cast<size_t>(i) * c + j;
        y.data[k] = p.gamma[j] * (x.data[k] - m.mu[i]) / denom + p.beta[j];
      }
    }
    return y;
  }
  require(x.shape.size() == 3, Errc::shape, "batch/group normalize expects [batch, channels, spatial]");
  int n = x.shape[0], c = x.shape[1], s = x.shape[2];
  p.validate(c);
  if (p.kind == NormKind::batch) {
    require(static_cast<int>(m.mu.numel()) == c, Errc::shape, "moments do not broadcast against x");
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        double denom = m.sigma[ch] + p.eps;
        size_t base = (static_cast<size_t>(b) * c + ch) * s;
        for (int i = 0; i < s; ++i)
          y.data[base + i] = p.gamma[ch] * (x.data[base + i] - m.mu[ch]) / denom + p.beta[ch];
      }
    return y;
  }
  int per = c / p.groups;
  require(m.mu.shape == std::vector<int>({n, p.groups}), Errc::shape,
          "moments do not broadcast against x");
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      int g = ch / per;
      double denom = m.sigma.at(b, g) + p.eps;
      size_t base = (static_cast<size_t>(b) * c + ch) * s;
      for (int i = 0; i < s; ++i)
        y.data[base + i] = p.gamma[ch] * (x.data[base + i] - m.mu.at(b, g)) / denom + p.beta[ch];
    }
  return y;
}

// Gradients of sum(grad_y * y) with respect to gamma and beta, mu/sigma given.
struct AffineGrads {
  Tensor dgamma;
  Tensor dbeta;
};

inline AffineGrads normalize_affine_grads(const Tensor& x, const Moments& m, const NormParams& p,
                                          const Tensor& grad_y) {
  require(grad_y.same_shape(x), Errc::shape, "grad_y must match x");
  int c = static_cast<int>(p.gamma.numel());
  AffineGrads g{Tensor({c}), Tensor({c})};
  if (p.kind == NormKind::layer) {
    int r = x.shape[0], cc = x.shape[1];
    for (int i = 0; i < r; ++i) {
      double denom = m.sigma[i] + p.eps;
      for (int j = 0; j < cc; ++j) {
        size_t k = static_cast<size_t>(i) * cc + j;
        double xhat = (x.data[k] - m.mu[i]) / denom;
        g.dgamma[j] += xhat * grad_y.data[k];
        g.dbeta[j] += grad_y.data[k];
      }
    }
    return g;
  }
  int n = x.shape[0], cc = x.shape[1], s = x.shape[2];
  int per = p.kind == NormKind::group ? cc / p.groups : cc;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < cc; ++ch) {
      double mu, sigma;
      if (p.kind == NormKind::batch) {
        mu = m.mu[ch];
        sigma = m.sigma[ch];
      } else {
        int gr = ch / per;
        mu = m.mu.at(b, gr);
        sigma = m.sigma.at(b, gr);
      }
      double denom = sigma + p.eps;
      size_t base = (static_cast<size_t>(b) * cc + ch) * s;
      for (int i = 0; i < s; ++i) {
        double xhat = (x.data[base + i] - mu) / denom;
        g.dgamma[ch] += xhat * grad_y.data[base + i];
        g.dbeta[ch] += grad_y.data[base + i];
      }
    }
  return g;
}

}  // namespace sac
