#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/arch_spec.hpp"
#include "sac/common.hpp"
#include "sac/norm.hpp"
#include "sac/plan.hpp"
#include "sac/rng.hpp"
#include "sac/tensor.hpp"

namespace sac {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct Param {
  std::string name;
  std::vector<std::string> tags;
  Tensor value;
  Tensor grad;
  bool trainable = false;
};

class ParamStore {
public:
  Param* add(const std::string& name, std::vector<int> shape, std::vector<std::string> tags) {
    auto p = std::make_unique<Param>();
    p->name = name;
    p->tags = std::move(tags);
    p->value = Tensor(shape);
    p->grad = Tensor(shape);
    items_.push_back(std::move(p));
    return items_.back().get();
  }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }

  void zero_grads() {
    for (auto& p : items_) p->grad.zero();
  }

private:
  std::vector<std::unique_ptr<Param>> items_;
};

// ---------------------------------------------------------------------------
// Modules. Each caches what its backward needs; forward/backward are called
// once per sample in matching order.
// ---------------------------------------------------------------------------

// y = x * W^T + b, optionally plus a low-rank delta scale * (x A^T) B^T.
struct LinearMod {
  Param* w = nullptr;  // [out, in]
  Param* b = nullptr;  // [out]
  Param* la = nullptr; // [r, in]
  Param* lb = nullptr; // [out, r]
  double lora_scale = 1.0;

  Tensor x_, u_;

  Tensor forward(const Tensor& x) {
    x_ = x;
    Tensor y;
    matmul_bt(x, w->value, y);
    int out = w->value.shape[0];
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < out; ++j) y.at(i, j) += b->value[j];
    if (la) {
      matmul_bt(x, la->value, u_);  // [n, r]
      Tensor delta;
      matmul_bt(u_, lb->value, delta);  // [n, out]
      for (size_t i = 0; i < y.numel(); ++i) y[i] += lora_scale * delta[i];
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    matmul_at(dy, x_, w->grad, /*acc=*/true);  // dW += dy^T x
    int out = w->value.shape[0];
    for (int i = 0; i < dy.rows(); ++i)
      for (int j = 0; j < out; ++j) b->grad[j] += dy.at(i, j);
    Tensor dx;
    matmul(dy, w->value, dx);
    if (la) {
      Tensor du;  // [n, r] = scale * dy * B
      matmul(dy, lb->value, du);
      for (size_t i = 0; i < du.numel(); ++i) du[i] *= lora_scale;
      Tensor db;  // dB += scale * dy^T u
      matmul_at(dy, u_, db);
      for (size_t i = 0; i < db.numel(); ++i) lb->grad[i] += lora_scale * db[i];
      matmul_at(du, x_, la->grad, /*acc=*/true);  // dA += du^T x
      Tensor dx2;
      matmul(du, la->value, dx2);
      for (size_t i = 0; i < dx.numel(); ++i) dx[i] += dx2[i];
    }
    return dx;
  }
};

// Token-wise layer normalization over the feature axis; gb packs [gamma; beta].
struct LayerNormTok {
  Param* gb = nullptr;  // [2, C]
  double eps = 1e-5;

  Tensor xhat_;
  std::vector<double> sigma_;

  Tensor forward(const Tensor& x) {
    int n = x.rows(), c = x.cols();
    xhat_ = Tensor({n, c});
    sigma_.assign(n, 0.0);
    Tensor y({n, c});
    const double* gamma = &gb->value.data[0];
    const double* beta = &gb->value.data[c];
    for (int i = 0; i < n; ++i) {
      const double* row = &x.data[static_cast<size_t>(i) * c];
      double mu = 0.0;
      for (int j = 0; j < c; ++j) mu += row[j];
      mu /= c;
      double var = 0.0;
      for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
      double sigma = std::sqrt(var / c);
      sigma_[i] = sigma;
      double denom = sigma + eps;
      for (int j = 0; j < c; ++j) {
        double xh = (row[j] - mu) / denom;
        xhat_.at(i, j) = xh;
        y.at(i, j) = gamma[j] * xh + beta[j];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    int n = dy.rows(), c = dy.cols();
    Tensor dx({n, c});
    const double* gamma = &gb->value.data[0];
    double* dgamma = &gb->grad.data[0];
    double* dbeta = &gb->grad.data[c];
    for (int i = 0; i < n; ++i) {
      double gmean = 0.0, gxmean = 0.0;
      for (int j = 0; j < c; ++j) {
        double g = gamma[j] * dy.at(i, j);
        gmean += g;
        gxmean += g * xhat_.at(i, j);
        dgamma[j] += xhat_.at(i, j) * dy.at(i, j);
        dbeta[j] += dy.at(i, j);
      }
      gmean /= c;
      gxmean /= c;
      double denom = sigma_[i] + eps;
      double sigma = std::max(sigma_[i], 1e-12);
      for (int j = 0; j < c; ++j) {
        double g = gamma[j] * dy.at(i, j);
        dx.at(i, j) = (g - gmean) / denom - xhat_.at(i, j) * gxmean / sigma;
      }
    }
    return dx;
  }
};

// Spatial normalization over [C, H, W], three flavours:
//   group — per group of channels, statistics over (C/G)*H*W
//   layer — per spatial position, statistics over C
//   batch — per channel, statistics over H*W (micro-batch of one) with
//           running buffers; eval mode normalizes by the buffers
struct Norm2d {
  Param* gb = nullptr;  // [2, C]
  NormKind kind = NormKind::group;
  int groups = 1;
  double eps = 1e-5;
  bool update_running_stats = true;
  double momentum = 0.1;
  Tensor running_mu, running_var;  // batch kind buffers [C]
  bool train_mode = true;

  Tensor xhat_;
  std::vector<double> sigma_;  // per normalization unit

  void init_buffers(int c) {
    running_mu = Tensor({c}, 0.0);
    running_var = Tensor({c}, 1.0);
  }

  Tensor forward(const Tensor& x) {
    int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    int s = h * w;
    xhat_ = Tensor(x.shape);
    Tensor y(x.shape);
    const double* gamma = &gb->value.data[0];
    const double* beta = &gb->value.data[c];

    if (kind == NormKind::group) {
      int per = c / groups;
      sigma_.assign(groups, 0.0);
      for (int g = 0; g < groups; ++g) {
        double mu = 0.0;
        for (int ch = g * per; ch < (g + 1) * per; ++ch)
          for (int i = 0; i < s; ++i) mu += x.data[static_cast<size_t>(ch) * s + i];
        double cnt = static_cast<double>(per) * s;
        mu /= cnt;
        double var = 0.0;
        for (int ch = g * per; ch < (g + 1) * per; ++ch)
          for (int i = 0; i < s; ++i) {
            double d = x.data[static_cast<size_t>(ch) * s + i] - mu;
            var += d * d;
          }
        double sigma = std::sqrt(var / cnt);
        sigma_[g] = sigma;
        double denom = sigma + eps;
        for (int ch = g * per; ch < (g + 1) * per; ++ch)
          for (int i = 0; i < s; ++i) {
            size_t k = static_cast<size_t>(ch) * s + i;
            double xh = (x.data[k] - mu) / denom;
            xhat_.data[k] = xh;
            y.data[k] = gamma[ch] * xh + beta[ch];
          }
      }
      return y;
    }

    if (kind == NormKind::layer) {
      sigma_.assign(s, 0.0);
      for (int i = 0; i < s; ++i) {
        double mu = 0.0;
        for (int ch = 0; ch < c; ++ch) mu += x.data[static_cast<size_t>(ch) * s + i];
        mu /= c;
        double var = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          double d = x.data[static_cast<size_t>(ch) * s + i] - mu;
          var += d * d;
        }
        double sigma = std::sqrt(var / c);
        sigma_[i] = sigma;
        double denom = sigma + eps;
        for (int ch = 0; ch < c; ++ch) {
          size_t k = static_cast<size_t>(ch) * s + i;
          double xh = (x.data[k] - mu) / denom;
          xhat_.data[k] = xh;
          y.data[k] = gamma[ch] * xh + beta[ch];
        }
      }
      return y;
    }

    // batch
    sigma_.assign(c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
      double mu, var;
      if (train_mode) {
        mu = 0.0;
        for (int i = 0; i < s; ++i) mu += x.data[static_cast<size_t>(ch) * s + i];
        mu /= s;
        var = 0.0;
        for (int i = 0; i < s; ++i) {
          double d = x.data[static_cast<size_t>(ch) * s + i] - mu;
          var += d * d;
        }
        var /= s;
        if (update_running_stats) {
          running_mu[ch] = (1.0 - momentum) * running_mu[ch] + momentum * mu;
          running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var;
        }
      } else {
        mu = running_mu[ch];
        var = running_var[ch];
      }
      double sigma = std::sqrt(var);
      sigma_[ch] = sigma;
      double denom = sigma + eps;
      for (int i = 0; i < s; ++i) {
        size_t k = static_cast<size_t>(ch) * s + i;
        double xh = (x.data[k] - mu) / denom;
        xhat_.data[k] = xh;
        y.data[k] = gamma[ch] * xh + beta[ch];
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    int c = dy.shape[0], h = dy.shape[1], w = dy.shape[2];
    int s = h * w;
    Tensor dx(dy.shape);
    const double* gamma = &gb->value.data[0];
    double* dgamma = &gb->grad.data[0];
    double* dbeta = &gb->grad.data[c];
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < s; ++i) {
        size_t k = static_cast<size_t>(ch) * s + i;
        dgamma[ch] += xhat_.data[k] * dy.data[k];
        dbeta[ch] += dy.data[k];
      }

    if (kind == NormKind::group) {
      int per = c / groups;
      for (int g = 0; g < groups; ++g) {
        double cnt = static_cast<double>(per) * s;
        double gmean = 0.0, gxmean = 0.0;
        for (int ch = g * per; ch < (g + 1) * per; ++ch)
          for (int i = 0; i < s; ++i) {
            size_t k = static_cast<size_t>(ch) * s + i;
            double gv = gamma[ch] * dy.data[k];
            gmean += gv;
            gxmean += gv * xhat_.data[k];
          }
        gmean /= cnt;
        gxmean /= cnt;
        double denom = sigma_[g] + eps;
        double sigma = std::max(sigma_[g], 1e-12);
        for (int ch = g * per; ch < (g + 1) * per; ++ch)
          for (int i = 0; i < s; ++i) {
            size_t k = static_cast<size_t>(ch) * s + i;
            double gv = gamma[ch] * dy.data[k];
            dx.data[k] = (gv - gmean) / denom - xhat_.data[k] * gxmean / sigma;
          }
      }
      return dx;
    }

    if (kind == NormKind::layer) {
      for (int i = 0; i < s; ++i) {
        double gmean = 0.0, gxmean = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          size_t k = static_cast<size_t>(ch) * s + i;
          double gv = gamma[ch] * dy.data[k];
          gmean += gv;
          gxmean += gv * xhat_.data[k];
        }
        gmean /= c;
        gxmean /= c;
        double denom = sigma_[i] + eps;
        double sigma = std::max(sigma_[i], 1e-12);
        for (int ch = 0; ch < c; ++ch) {
          size_t k = static_cast<size_t>(ch) * s + i;
          double gv = gamma[ch] * dy.data[k];
          dx.data[k] = (gv - gmean) / denom - xhat_.data[k] * gxmean / sigma;
        }
      }
      return dx;
    }

    // batch
    for (int ch = 0; ch < c; ++ch) {
      double denom = sigma_[ch] + eps;
      if (!train_mode) {
        for (int i = 0; i < s; ++i) {
          size_t k = static_cast<size_t>(ch) * s + i;
          dx.data[k] = gamma[ch] * dy.data[k] / denom;
        }
        continue;
      }
      double gmean = 0.0, gxmean = 0.0;
      for (int i = 0; i < s; ++i) {
        size_t k = static_cast<size_t>(ch) * s + i;
        double gv = gamma[ch] * dy.data[k];
        gmean += gv;
        gxmean += gv * xhat_.data[k];
      }
      gmean /= s;
      gxmean /= s;
      double sigma = std::max(sigma_[ch], 1e-12);
      for (int i = 0; i < s; ++i) {
        size_t k = static_cast<size_t>(ch) * s + i;
        double gv = gamma[ch] * dy.data[k];
        dx.data[k] = (gv - gmean) / denom - xhat_.data[k] * gxmean / sigma;
      }
    }
    return dx;
  }
};

struct GeluMod {
  Tensor x_;
  Tensor forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i)
      y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * 0.7071067811865475));
    return y;
  }
  Tensor backward(const Tensor& dy) {
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.numel(); ++i) {
      double x = x_[i];
      double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
      double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
      dx[i] = dy[i] * (cdf + x * pdf);
    }
    return dx;
  }
};

struct ReluMod {
  Tensor x_;
  Tensor forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
  }
  Tensor backward(const Tensor& dy) {
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > 0.0 ? dy[i] : 0.0;
    return dx;
  }
};

// Multi-head self-attention over [n, dim] tokens.
struct AttentionMod {
  int heads = 1, dim = 0, dh = 0;
  LinearMod qkv, proj;

  std::vector<Tensor> q_, k_, v_, attn_;

  Tensor forward(const Tensor& x) {
    int n = x.rows();
    Tensor qkv_out = qkv.forward(x);  // [n, 3*dim]
    q_.assign(heads, Tensor());
    k_.assign(heads, Tensor());
    v_.assign(heads, Tensor());
    attn_.assign(heads, Tensor());
    Tensor merged({n, dim});
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
      Tensor q({n, dh}), k({n, dh}), v({n, dh});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j) {
          q.at(i, j) = qkv_out.at(i, h * dh + j);
          k.at(i, j) = qkv_out.at(i, dim + h * dh + j);
          v.at(i, j) = qkv_out.at(i, 2 * dim + h * dh + j);
        }
      Tensor scores;
      matmul_bt(q, k, scores);  // [n, n]
      for (size_t i = 0; i < scores.numel(); ++i) scores[i] *= scale;
      // row-wise softmax
      for (int i = 0; i < n; ++i) {
        double* row = &scores.data[static_cast<size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (int j = 0; j < n; ++j) row[j] /= sum;
      }
      Tensor out;
      matmul(scores, v, out);  // [n, dh]
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j) merged.at(i, h * dh + j) = out.at(i, j);
      q_[h] = std::move(q);
      k_[h] = std::move(k);
      v_[h] = std::move(v);
      attn_[h] = std::move(scores);
    }
    return proj.forward(merged);
  }

  Tensor backward(const Tensor& dy) {
    Tensor dmerged = proj.backward(dy);  // [n, dim]
    int n = dmerged.rows();
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor dqkv({n, 3 * dim});
    for (int h = 0; h < heads; ++h) {
      Tensor dout({n, dh});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j) dout.at(i, j) = dmerged.at(i, h * dh + j);
      Tensor dattn;
      matmul_bt(dout, v_[h], dattn);  // [n, n]
      Tensor dv;
      matmul_at(attn_[h], dout, dv);  // [n, dh]
      // softmax backward row-wise
      Tensor dscores({n, n});
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += dattn.at(i, j) * attn_[h].at(i, j);
        for (int j = 0; j < n; ++j)
          dscores.at(i, j) = attn_[h].at(i, j) * (dattn.at(i, j) - dot);
      }
      for (size_t i = 0; i < dscores.numel(); ++i) dscores[i] *= scale;
      Tensor dq, dk;
      matmul(dscores, k_[h], dq);      // [n, dh]
      matmul_at(dscores, q_[h], dk);   // [n, dh]
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j) {
          dqkv.at(i, h * dh + j) = dq.at(i, j);
          dqkv.at(i, dim + h * dh + j) = dk.at(i, j);
          dqkv.at(i, 2 * dim + h * dh + j) = dv.at(i, j);
        }
    }
    return qkv.backward(dqkv);
  }
};

// 2-D convolution, stride 1, zero padding k/2, channel-major [C, H, W].
struct Conv2dMod {
  Param* w = nullptr;  // [out, in, k, k]
  Param* b = nullptr;  // [out]
  int k = 3;

  Tensor x_;

  Tensor forward(const Tensor& x) {
    x_ = x;
    int cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    int cout = w->value.shape[0];
    int pad = k / 2;
    Tensor y({cout, h, wd});
    for (int co = 0; co < cout; ++co) {
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < wd; ++xx) {
          double acc = b->value[co];
          for (int ci = 0; ci < cin; ++ci) {
            const double* xplane = &x.data[static_cast<size_t>(ci) * h * wd];
            const double* wbase =
                &w->value.data[((static_cast<size_t>(co) * cin + ci) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
              int sy = yy + ky - pad;
              if (sy < 0 || sy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int sx = xx + kx - pad;
                if (sx < 0 || sx >= wd) continue;
                acc += wbase[ky * k + kx] * xplane[sy * wd + sx];
              }
            }
          }
          y.data[(static_cast<size_t>(co) * h + yy) * wd + xx] = acc;
        }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    int cin = x_.shape[0], h = x_.shape[1], wd = x_.shape[2];
    int cout = w->value.shape[0];
    int pad = k / 2;
    Tensor dx(x_.shape);
    for (int co = 0; co < cout; ++co) {
      const double* dyplane = &dy.data[static_cast<size_t>(co) * h * wd];
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < wd; ++xx) {
          double g = dyplane[yy * wd + xx];
          if (g == 0.0) continue;
          b->grad[co] += g;
          for (int ci = 0; ci < cin; ++ci) {
            const double* xplane = &x_.data[static_cast<size_t>(ci) * h * wd];
            double* dxplane = &dx.data[static_cast<size_t>(ci) * h * wd];
            double* wbase = &w->value.data[((static_cast<size_t>(co) * cin + ci) * k) * k];
            double* dwbase = &w->grad.data[((static_cast<size_t>(co) * cin + ci) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
              int sy = yy + ky - pad;
              if (sy < 0 || sy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int sx = xx + kx - pad;
                if (sx < 0 || sx >= wd) continue;
                dwbase[ky * k + kx] += g * xplane[sy * wd + sx];
                dxplane[sy * wd + sx] += g * wbase[ky * k + kx];
              }
            }
          }
        }
    }
    return dx;
  }
};

struct Upsample2Mod {
  Tensor forward(const Tensor& x) {
    int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor y({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx)
          y.data[(static_cast<size_t>(ch) * 2 * h + yy) * 2 * w + xx] =
              x.data[(static_cast<size_t>(ch) * h + yy / 2) * w + xx / 2];
    return y;
  }
  Tensor backward(const Tensor& dy) {
    int c = dy.shape[0], h2 = dy.shape[1], w2 = dy.shape[2];
    int h = h2 / 2, w = w2 / 2;
    Tensor dx({c, h, w});
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < h2; ++yy)
        for (int xx = 0; xx < w2; ++xx)
          dx.data[(static_cast<size_t>(ch) * h + yy / 2) * w + xx / 2] +=
              dy.data[(static_cast<size_t>(ch) * h2 + yy) * w2 + xx];
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Toy segmenter: patchified transformer encoder, convolutional decoder with a
// full-resolution stem skip, sigmoid head. Parameter names carry the tags the
// tuning plans select on.
// ---------------------------------------------------------------------------

struct ToySegmenterSpec {
  int input_res = 64;
  int patch = 8;
  int embed_dim = 48;
  int depth = 3;
  int heads = 4;
  int mlp_hidden = 192;
  std::vector<int> decoder_channels = {32, 16, 8};
  int stem_channels = 12;
  std::string encoder_norm = "layer";
  std::string decoder_norm = "group";
  int decoder_groups = 0;  // 0 = per-channel statistics (instance style)
  bool update_running_stats = true;
  double norm_eps = 1e-5;

  void validate() const {
    require(input_res >= 8 && patch >= 1 && input_res % patch == 0, Errc::config,
            "input_res must be a multiple of patch");
    require(embed_dim > 0 && depth >= 1 && heads >= 1 && embed_dim % heads == 0, Errc::config,
            "embed_dim must be positive and divisible by heads");
    require(mlp_hidden > 0 && stem_channels > 0, Errc::config, "widths must be positive");
    require(!decoder_channels.empty(), Errc::config, "need at least one decoder stage");
    int scale = 1;
    for (size_t i = 0; i < decoder_channels.size(); ++i) {
      require(decoder_channels[i] > 0, Errc::config, "decoder channels must be positive");
      scale *= 2;
    }
    require(scale == patch, Errc::config,
            strf("decoder stages (%zu) must upsample the %dx token grid back to input_res "
                 "(need patch == 2^stages)",
                 decoder_channels.size(), input_res / patch));
    require(encoder_norm == "layer", Errc::config, "encoder stages use layer normalization");
    require(decoder_groups >= 0, Errc::config, "decoder_groups must be >= 0");
    NormKind dk = parse_norm_kind(decoder_norm);
    if (dk == NormKind::group && decoder_groups > 0) {
      for (int c : decoder_channels)
        require(c % decoder_groups == 0, Errc::config, "decoder_groups must divide stage channels");
      require(stem_channels % decoder_groups == 0 &&
                  (decoder_channels.back() + stem_channels) % decoder_groups == 0,
              Errc::config, "decoder_groups must divide stem and head channels");
    }
    require(norm_eps > 0, Errc::config, "norm_eps must be positive");
  }

  json to_json() const {
    return json{{"input_res", input_res},
                {"patch", patch},
                {"embed_dim", embed_dim},
                {"depth", depth},
                {"heads", heads},
                {"mlp_hidden", mlp_hidden},
                {"decoder_channels", decoder_channels},
                {"stem_channels", stem_channels},
                {"encoder_norm", encoder_norm},
                {"decoder_norm", decoder_norm},
                {"decoder_groups", decoder_groups},
                {"update_running_stats", update_running_stats},
                {"norm_eps", norm_eps}};
  }

  static ToySegmenterSpec from_json(const json& j) {
    ToySegmenterSpec s;
    try {
      if (j.contains("input_res")) s.input_res = j.at("input_res").get<int>();
      if (j.contains("patch")) s.patch = j.at("patch").get<int>();
      if (j.contains("embed_dim")) s.embed_dim = j.at("embed_dim").get<int>();
      if (j.contains("depth")) s.depth = j.at("depth").get<int>();
      if (j.contains("heads")) s.heads = j.at("heads").get<int>();
      if (j.contains("mlp_hidden")) s.mlp_hidden = j.at("mlp_hidden").get<int>();
      if (j.contains("decoder_channels"))
        s.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
      if (j.contains("stem_channels")) s.stem_channels = j.at("stem_channels").get<int>();
      if (j.contains("encoder_norm")) s.encoder_norm = j.at("encoder_norm").get<std::string>();
      if (j.contains("decoder_norm")) s.decoder_norm = j.at("decoder_norm").get<std::string>();
      if (j.contains("decoder_groups")) s.decoder_groups = j.at("decoder_groups").get<int>();
      if (j.contains("update_running_stats"))
        s.update_running_stats = j.at("update_running_stats").get<bool>();
      if (j.contains("norm_eps")) s.norm_eps = j.at("norm_eps").get<double>();
    } catch (const json::exception& e) {
      throw Error(Errc::parse, std::string("toy segmenter spec: ") + e.what());
    }
    s.validate();
    return s;
  }
};

class ToySegmenter {
public:
  ToySegmenter(const ToySegmenterSpec& spec, uint64_t seed) : spec_(spec), init_seed_(seed) {
    spec_.validate();
    build(seed);
  }

  const ToySegmenterSpec& spec() const { return spec_; }
  uint64_t init_seed() const { return init_seed_; }

  // image [H, W, 3] in [0,1]  ->  probability map [H, W]
  Tensor forward(const Tensor& image) {
    require(image.shape == std::vector<int>({spec_.input_res, spec_.input_res, 3}), Errc::shape,
            "image shape " + image.shape_str() + " does not match model resolution");
    int res = spec_.input_res, p = spec_.patch, g = res / p, d = spec_.embed_dim;
    int n = g * g;

    // HWC -> CHW
    Tensor chw({3, res, res});
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        for (int c = 0; c < 3; ++c)
          chw.data[(static_cast<size_t>(c) * res + y) * res + x] =
              image.data[(static_cast<size_t>(y) * res + x) * 3 + c];
    chw_ = chw;

    // patchify: [n, 3*p*p], feature order (c, py, px)
    Tensor unfolded({n, 3 * p * p});
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx) {
        int idx = gy * g + gx;
        for (int c = 0; c < 3; ++c)
          for (int py = 0; py < p; ++py)
            for (int px = 0; px < p; ++px)
              unfolded.at(idx, (c * p + py) * p + px) =
                  chw.data[(static_cast<size_t>(c) * res + gy * p + py) * res + gx * p + px];
      }
    Tensor tok = patch_embed_.forward(unfolded);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) tok.at(i, j) += pos_embed_->value.at(i, j);

    for (auto& blk : blocks_) {
      Tensor normed = blk->ln1.forward(tok);
      Tensor att = blk->attn.forward(normed);
      for (size_t i = 0; i < tok.numel(); ++i) tok[i] += att[i];
      Tensor normed2 = blk->ln2.forward(tok);
      Tensor h = blk->mlp_lin1.forward(normed2);
      h = blk->gelu.forward(h);
      Tensor m = blk->mlp_lin2.forward(h);
      for (size_t i = 0; i < tok.numel(); ++i) tok[i] += m[i];
    }

    // tokens -> [D, g, g]
    Tensor fmap({d, g, g});
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx)
        for (int j = 0; j < d; ++j)
          fmap.data[(static_cast<size_t>(j) * g + gy) * g + gx] = tok.at(gy * g + gx, j);

    Tensor f = fmap;
    for (auto& st : stages_) {
      f = st->conv.forward(f);
      f = st->norm.forward(f);
      f = st->relu.forward(f);
      f = st->up.forward(f);
    }

    // linear stem skip: normalized full-resolution features, no activation,
    // so intensity outliers keep their sign for the head readout
    Tensor s = stem_conv_.forward(chw);
    s = stem_norm_.forward(s);

    int cf = f.shape[0], cs = s.shape[0];
    Tensor cat({cf + cs, res, res});
    std::memcpy(cat.data.data(), f.data.data(), f.numel() * sizeof(double));
    std::memcpy(cat.data.data() + f.numel(), s.data.data(), s.numel() * sizeof(double));

    Tensor hn = head_norm_.forward(cat);
    Tensor logit = head_conv_.forward(hn);  // [1, res, res]

    prob_ = Tensor({res, res});
    for (int i = 0; i < res * res; ++i) prob_[i] = 1.0 / (1.0 + std::exp(-logit.data[i]));
    return prob_;
  }

  // dprob [H, W]; accumulates parameter gradients
  void backward(const Tensor& dprob) {
    int res = spec_.input_res, pch = spec_.patch, g = res / pch, d = spec_.embed_dim;
    int n = g * g;
    require(dprob.shape == std::vector<int>({res, res}), Errc::shape, "dprob shape mismatch");

    Tensor dlogit({1, res, res});
    for (int i = 0; i < res * res; ++i) {
      double pv = prob_[i];
      dlogit.data[i] = dprob[i] * pv * (1.0 - pv);
    }
    Tensor dcat = head_norm_.backward(head_conv_.backward(dlogit));

    int cf = spec_.decoder_channels.back(), cs = spec_.stem_channels;
    Tensor df({cf, res, res}), ds({cs, res, res});
    std::memcpy(df.data.data(), dcat.data.data(), df.numel() * sizeof(double));
    std::memcpy(ds.data.data(), dcat.data.data() + df.numel(), ds.numel() * sizeof(double));

    ds = stem_norm_.backward(ds);
    stem_conv_.backward(ds);  // input gradient unused

    Tensor cur = df;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
      cur = (*it)->up.backward(cur);
      cur = (*it)->relu.backward(cur);
      cur = (*it)->norm.backward(cur);
      cur = (*it)->conv.backward(cur);
    }

    // [D, g, g] -> token grads
    Tensor dtok({n, d});
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx)
        for (int j = 0; j < d; ++j)
          dtok.at(gy * g + gx, j) = cur.data[(static_cast<size_t>(j) * g + gy) * g + gx];

    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      Block* blk = it->get();
      Tensor dm = blk->mlp_lin2.backward(dtok);
      dm = blk->gelu.backward(dm);
      dm = blk->mlp_lin1.backward(dm);
      Tensor dx2 = blk->ln2.backward(dm);
      for (size_t i = 0; i < dtok.numel(); ++i) dtok[i] += dx2[i];

      Tensor datt = blk->attn.backward(dtok);
      Tensor dx1 = blk->ln1.backward(datt);
      for (size_t i = 0; i < dtok.numel(); ++i) dtok[i] += dx1[i];
    }

    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) pos_embed_->grad.at(i, j) += dtok.at(i, j);
    patch_embed_.backward(dtok);
  }

  std::vector<Param*> params() { return store_.all(); }
  void zero_grads() { store_.zero_grads(); }

  void set_train(bool train) {
    for (auto& st : stages_) st->norm.train_mode = train;
    stem_norm_.train_mode = train;
    head_norm_.train_mode = train;
  }

  ArchitectureSpec architecture() {
    ArchitectureSpec spec;
    spec.name = "toy-segmenter";
    for (auto* p : store_.all()) {
      if (p->name.find(".lora_") != std::string::npos) continue;  // base layout only
      ParamGroup grp;
      grp.name = p->name;
      for (int dd : p->value.shape) grp.shape.push_back(dd);
      grp.tags = p->tags;
      spec.groups.push_back(std::move(grp));
    }
    spec.validate();
    return spec;
  }

  // Resolves the plan, marks trainables, injects adapters (lora plans).
  const Selection& apply_plan(const TuningPlan& plan, uint64_t lora_seed = 1) {
    plan.validate();
    require(!plan_applied_, Errc::config, "a plan was already applied to this model");
    Selection sel = select_trainables(architecture(), plan);
    Rng rng(lora_seed);
    for (const auto& site : sel.adapters) {
      LinearMod* lin = find_linear(site.group_name);
      require(lin != nullptr, Errc::selection, "no linear module for " + site.group_name);
      std::vector<std::string> tags = {"lora"};
      for (auto* p : store_.all())
        if (p->name == site.group_name) tags = tag_union(p->tags, {"lora"});
      lin->la = store_.add(site.group_name + ".lora_a",
                           {site.rank, static_cast<int>(site.d_in)}, tags);
      lin->lb = store_.add(site.group_name + ".lora_b",
                           {static_cast<int>(site.d_out), site.rank}, tags);
      for (auto& v : lin->la->value.data) v = rng.normal(0.0, 0.02);
      lin->lb->value.zero();  // adapter starts as an exact no-op
      lin->la->trainable = true;
      lin->lb->trainable = true;
    }
    for (auto* p : store_.all()) {
      if (p->name.find(".lora_") != std::string::npos) continue;
      p->trainable = sel.contains(p->name);
    }
    selection_ = sel;
    plan_ = plan;
    plan_applied_ = true;
    return selection_;
  }

  const Selection& selection() const { return selection_; }
  const TuningPlan& plan() const { return plan_; }
  bool plan_applied() const { return plan_applied_; }

  std::map<std::string, Tensor> snapshot() {
    std::map<std::string, Tensor> snap;
    for (auto* p : store_.all()) snap[p->name] = p->value;
    return snap;
  }

  std::vector<std::pair<std::string, Tensor*>> buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto grab = [&](const std::string& name, Norm2d& nm) {
      if (nm.kind == NormKind::batch) {
        out.emplace_back(name + ".running_mu", &nm.running_mu);
        out.emplace_back(name + ".running_var", &nm.running_var);
      }
    };
    for (size_t i = 0; i < stages_.size(); ++i) grab(strf("decoder.stage%zu.norm", i), stages_[i]->norm);
    grab("decoder.stem.norm", stem_norm_);
    grab("decoder.head.norm", head_norm_);
    return out;
  }

private:
  struct Block {
    LayerNormTok ln1, ln2;
    AttentionMod attn;
    LinearMod mlp_lin1, mlp_lin2;
    GeluMod gelu;
  };
  struct Stage {
    Conv2dMod conv;
    Norm2d norm;
    ReluMod relu;
    Upsample2Mod up;
  };

  static std::vector<std::string> tag_union(const std::vector<std::string>& a,
                                            const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    for (const auto& t : b)
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    return out;
  }

  LinearMod* find_linear(const std::string& weight_name) {
    for (auto& blk : blocks_) {
      if (blk->attn.qkv.w->name == weight_name) return &blk->attn.qkv;
      if (blk->mlp_lin2.w->name == weight_name) return &blk->mlp_lin2;
      if (blk->mlp_lin1.w->name == weight_name) return &blk->mlp_lin1;
      if (blk->attn.proj.w->name == weight_name) return &blk->attn.proj;
    }
    return nullptr;
  }

  Param* add_norm_param(const std::string& name, int channels, const std::string& kind,
                        std::vector<std::string> tags, double gamma_init = 1.0) {
    tags.push_back("norm-" + kind);
    Param* p = store_.add(name, {2, channels}, tags);
    for (int i = 0; i < channels; ++i) p->value[i] = gamma_init;  // gamma row
    return p;
  }

  void build(uint64_t seed) {
    Rng rng(seed);
    auto init = [&](Param* p, double stddev) {
      for (auto& v : p->value.data) v = rng.normal(0.0, stddev);
    };
    int res = spec_.input_res, p = spec_.patch, d = spec_.embed_dim;
    int g = res / p, n = g * g;

    patch_embed_.w = store_.add("patch_embed.weight", {d, 3 * p * p}, {"encoder"});
    patch_embed_.b = store_.add("patch_embed.bias", {d}, {"encoder"});
    init(patch_embed_.w, 0.02);
    pos_embed_ = store_.add("pos_embed", {n, d}, {"encoder"});
    init(pos_embed_, 0.02);

    for (int i = 0; i < spec_.depth; ++i) {
      auto blk = std::make_unique<Block>();
      std::string pre = strf("blocks.%d.", i);
      std::string bt = strf("block:%d", i);
      blk->ln1.gb = add_norm_param(pre + "norm1", d, "layer", {"encoder", bt});
      blk->ln1.eps = spec_.norm_eps;
      blk->attn.heads = spec_.heads;
      blk->attn.dim = d;
      blk->attn.dh = d / spec_.heads;
      blk->attn.qkv.w = store_.add(pre + "attn.qkv.weight", {3 * d, d}, {"encoder", "attention-qkv", bt});
      blk->attn.qkv.b = store_.add(pre + "attn.qkv.bias", {3 * d}, {"encoder", bt});
      blk->attn.proj.w = store_.add(pre + "attn.proj.weight", {d, d}, {"encoder", bt});
      blk->attn.proj.b = store_.add(pre + "attn.proj.bias", {d}, {"encoder", bt});
      blk->ln2.gb = add_norm_param(pre + "norm2", d, "layer", {"encoder", bt});
      blk->ln2.eps = spec_.norm_eps;
      blk->mlp_lin1.w = store_.add(pre + "mlp.lin1.weight", {spec_.mlp_hidden, d}, {"encoder", bt});
      blk->mlp_lin1.b = store_.add(pre + "mlp.lin1.bias", {spec_.mlp_hidden}, {"encoder", bt});
      blk->mlp_lin2.w =
          store_.add(pre + "mlp.lin2.weight", {d, spec_.mlp_hidden}, {"encoder", "mlp-linear2", bt});
      blk->mlp_lin2.b = store_.add(pre + "mlp.lin2.bias", {d}, {"encoder", bt});
      init(blk->attn.qkv.w, 0.02);
      init(blk->attn.proj.w, 0.02);
      init(blk->mlp_lin1.w, 0.02);
      init(blk->mlp_lin2.w, 0.02);
      blocks_.push_back(std::move(blk));
    }

    NormKind dk = parse_norm_kind(spec_.decoder_norm);
    auto groups_for = [&](int channels) {
      return spec_.decoder_groups > 0 ? spec_.decoder_groups : channels;
    };
    int cin = d;
    for (size_t i = 0; i < spec_.decoder_channels.size(); ++i) {
      auto st = std::make_unique<Stage>();
      int cout = spec_.decoder_channels[i];
      std::string pre = strf("decoder.stage%zu.", i);
      st->conv.k = 3;
      st->conv.w = store_.add(pre + "conv.weight", {cout, cin, 3, 3}, {"decoder"});
      st->conv.b = store_.add(pre + "conv.bias", {cout}, {"decoder"});
      init(st->conv.w, 0.05);
      st->norm.gb = add_norm_param(pre + "norm", cout, spec_.decoder_norm, {"decoder"});
      st->norm.kind = dk;
      st->norm.groups = groups_for(cout);
      st->norm.eps = spec_.norm_eps;
      st->norm.update_running_stats = spec_.update_running_stats;
      if (dk == NormKind::batch) st->norm.init_buffers(cout);
      stages_.push_back(std::move(st));
      cin = cout;
    }

    stem_conv_.k = 3;
    stem_conv_.w = store_.add("decoder.stem.conv.weight", {spec_.stem_channels, 3, 3, 3}, {"decoder"});
    stem_conv_.b = store_.add("decoder.stem.conv.bias", {spec_.stem_channels}, {"decoder"});
    init(stem_conv_.w, 0.2);
    stem_norm_.gb = add_norm_param("decoder.stem.norm", spec_.stem_channels, spec_.decoder_norm, {"decoder"});
    stem_norm_.kind = dk;
    stem_norm_.groups = groups_for(spec_.stem_channels);
    stem_norm_.eps = spec_.norm_eps;
    stem_norm_.update_running_stats = spec_.update_running_stats;
    if (dk == NormKind::batch) stem_norm_.init_buffers(spec_.stem_channels);

    // small gate on the head norm: the readout starts near-neutral and the
    // scale parameters can re-sign or silence channels within a short tuning
    // budget (LayerScale-style init)
    int head_c = spec_.decoder_channels.back() + spec_.stem_channels;
    head_norm_.gb = add_norm_param("decoder.head.norm", head_c, spec_.decoder_norm, {"decoder"}, 0.1);
    head_norm_.kind = dk;
    head_norm_.groups = groups_for(head_c);
    head_norm_.eps = spec_.norm_eps;
    head_norm_.update_running_stats = spec_.update_running_stats;
    if (dk == NormKind::batch) head_norm_.init_buffers(head_c);
    head_conv_.k = 1;
    head_conv_.w = store_.add("decoder.head.conv.weight", {1, head_c, 1, 1}, {"decoder"});
    head_conv_.b = store_.add("decoder.head.conv.bias", {1}, {"decoder"});
    // head readout at twice unit-variance scale: norm-only plans move gamma
    // by at most ~lr*steps, and the frozen readout has to turn that budget
    // into usable logit range
    init(head_conv_.w, 2.0 / std::sqrt(static_cast<double>(head_c)));
  }

  ToySegmenterSpec spec_;
  uint64_t init_seed_ = 0;
  ParamStore store_;

  LinearMod patch_embed_;
  Param* pos_embed_ = nullptr;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<std::unique_ptr<Stage>> stages_;
  Conv2dMod stem_conv_;
  Norm2d stem_norm_;
  Norm2d head_norm_;
  Conv2dMod head_conv_;

  Tensor chw_, prob_;

  Selection selection_;
  TuningPlan plan_;
  bool plan_applied_ = false;
};

inline std::unique_ptr<ToySegmenter> build_toy_segmenter(const ToySegmenterSpec& spec, uint64_t seed) {
  return std::make_unique<ToySegmenter>(spec, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (spec, plan, layout, metadata) + raw doubles.
// Written to a temp file and renamed into place.
// ---------------------------------------------------------------------------

constexpr char kCkptMagic[8] = {'S', 'A', 'C', 'C', 'K', 'P', 'T', '1'};

inline void save_checkpoint(const std::string& path, ToySegmenter& model, const json& meta = {}) {
  json header;
  header["spec"] = model.spec().to_json();
  header["seed"] = model.init_seed();
  header["plan"] = model.plan_applied() ? plan_to_json(model.plan()) : json(nullptr);
  header["meta"] = meta;
  header["params"] = json::array();
  size_t total = 0;
  for (auto* p : model.params()) {
    header["params"].push_back({{"name", p->name}, {"shape", p->value.shape}});
    total += p->value.numel();
  }
  header["buffers"] = json::array();
  for (auto& [name, t] : model.buffers()) {
    header["buffers"].push_back({{"name", name}, {"shape", t->shape}});
    total += t->numel();
  }

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), Errc::output, "cannot write checkpoint " + tmp);
    std::string hs = header.dump();
    std::uint64_t hlen = hs.size();
    out.write(kCkptMagic, 8);
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (auto* p : model.params())
      out.write(reinterpret_cast<const char*>(p->value.data.data()),
                static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
    for (auto& [name, t] : model.buffers())
      out.write(reinterpret_cast<const char*>(t->data.data()),
                static_cast<std::streamsize>(t->numel() * sizeof(double)));
    require(out.good(), Errc::output, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  std::unique_ptr<ToySegmenter> model;
  json meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kCkptMagic, 8) == 0, Errc::parse,
          path + " is not a checkpoint file");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  require(in.good() && hlen < (1ull << 30), Errc::parse, "corrupt checkpoint header");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }

  LoadedCheckpoint lc;
  ToySegmenterSpec spec = ToySegmenterSpec::from_json(header.at("spec"));
  uint64_t seed = header.value("seed", 0ull);
  lc.model = std::make_unique<ToySegmenter>(spec, seed);
  if (!header.at("plan").is_null()) lc.model->apply_plan(plan_from_json(header.at("plan")));
  lc.meta = header.value("meta", json::object());

  auto params = lc.model->params();
  const auto& jp = header.at("params");
  require(jp.size() == params.size(), Errc::parse,
          strf("checkpoint lists %zu params, model has %zu", jp.size(), params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    require(jp[i].at("name").get<std::string>() == params[i]->name, Errc::parse,
            "checkpoint parameter order mismatch at " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data.data()),
            static_cast<std::streamsize>(params[i]->value.numel() * sizeof(double)));
  }
  auto bufs = lc.model->buffers();
  const auto& jb = header.at("buffers");
  require(jb.size() == bufs.size(), Errc::parse, "checkpoint buffer count mismatch");
  for (size_t i = 0; i < bufs.size(); ++i)
    in.read(reinterpret_cast<char*>(bufs[i].second->data.data()),
            static_cast<std::streamsize>(bufs[i].second->numel() * sizeof(double)));
  require(in.good(), Errc::parse, "checkpoint truncated: " + path);
  return lc;
}

}  // namespace sac
