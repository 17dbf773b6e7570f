#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sac/common.hpp"
#include "sac/dataset.hpp"
#include "sac/losses.hpp"
#include "sac/metrics.hpp"
#include "sac/model.hpp"
#include "sac/plan.hpp"
#include "sac/rng.hpp"

namespace sac {

// lr0 * (1 + cos(pi * t / T)) / 2, no warmup or restarts
inline double cosine_lr(std::int64_t step, std::int64_t total, double base_lr) {
  require(total > 0, Errc::config, "schedule horizon must be positive");
  require(step >= 0, Errc::schedule, "negative schedule step");
  require(step <= total, Errc::schedule,
          strf("step %lld beyond schedule horizon %lld", static_cast<long long>(step),
               static_cast<long long>(total)));
  double lr = base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643383279 *
                                              static_cast<double>(step) / static_cast<double>(total)));
  return lr > 0.0 ? lr : 0.0;
}

struct TrainConfig {
  int epochs = 4;
  double base_lr = 5e-4;
  int batch_size = 2;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double tau = 0.5;

  void validate() const {
    require(epochs >= 0, Errc::config, "epochs must be >= 0");
    require(base_lr > 0 && batch_size > 0, Errc::config, "lr and batch size must be positive");
    require(weight_decay >= 0, Errc::config, "weight decay must be >= 0");
    require(tau > 0 && tau < 1, Errc::config, "tau must lie in (0,1)");
  }
};

// Decoupled weight decay; decay applies to the selected (trainable) set only.
class AdamW {
public:
  AdamW(std::vector<Param*> params, const TrainConfig& cfg)
      : params_(std::move(params)),
        wd_(cfg.weight_decay),
        beta1_(cfg.beta1),
        beta2_(cfg.beta2),
        eps_(cfg.adam_eps) {
    for (auto* p : params_)
      if (p->trainable) {
        m_[p->name] = Tensor(p->value.shape);
        v_[p->name] = Tensor(p->value.shape);
      }
  }

  void step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto* p : params_) {
      if (!p->trainable) continue;
      Tensor& m = m_.at(p->name);
      Tensor& v = v_.at(p->name);
      for (size_t i = 0; i < p->value.numel(); ++i) {
        double g = p->grad[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p->value[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p->value[i]);
      }
    }
  }

  std::int64_t steps_taken() const { return t_; }

private:
  std::vector<Param*> params_;
  double wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// Pooled micro-F1 over a validation set; the model is left untouched.
inline double validate(ToySegmenter& model, const std::vector<ImageSample>& data, double tau) {
  require(!data.empty(), Errc::config, "validate needs a non-empty dataset");
  model.set_train(false);
  ConfusionCounts pooled;
  for (const auto& s : data) {
    Tensor prob = model.forward(s.image);
    pooled += confusion(binarize(prob, tau), s.mask);
  }
  model.set_train(true);
  return compute_metrics(pooled).f1;
}

struct EpochRecord {
  int epoch = 0;        // 1-based
  double mean_loss = 0.0;
  double val_f1 = 0.0;
  double seconds = 0.0;
};

struct TrainingHistory {
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based, 0 = none
  double best_val_f1 = 0.0;
  std::string checkpoint_path;
};

// Fine-tunes `model` under `plan`, updating only the selected parameter set.
// The best-validation-F1 checkpoint (ties -> earliest epoch) is persisted
// atomically when checkpoint_path is non-empty.
inline TrainingHistory train(ToySegmenter& model, const TuningPlan& plan, const LossForm& loss,
                             const std::vector<ImageSample>& train_data,
                             const std::vector<ImageSample>& val_data, const TrainConfig& cfg,
                             const std::string& checkpoint_path = "") {
  cfg.validate();
  loss.validate();
  require(!train_data.empty() && !val_data.empty(), Errc::config,
          "train and val datasets must be non-empty");

  if (!model.plan_applied()) model.apply_plan(plan, cfg.seed ^ 0x10ad5eedULL);
  const Selection& sel = model.selection();
  if (plan.strategy != Strategy::none)
    require(!sel.base_groups.empty() || !sel.adapters.empty(), Errc::config,
            "plan selected nothing to train");

  TrainingHistory hist;
  if (cfg.epochs == 0) return hist;

  AdamW opt(model.params(), cfg);
  Rng order_rng(cfg.seed);

  std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(train_data.size()) + cfg.batch_size - 1) / cfg.batch_size;
  std::int64_t total_steps = steps_per_epoch * cfg.epochs;
  std::int64_t global_step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(train_data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng erng = order_rng.fork(static_cast<uint64_t>(epoch));
    erng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
      size_t bend = std::min(order.size(), off + cfg.batch_size);
      double inv_b = 1.0 / static_cast<double>(bend - off);
      double lr = cosine_lr(global_step, total_steps, cfg.base_lr);

      model.zero_grads();
      double batch_loss = 0.0;
      for (size_t bi = off; bi < bend; ++bi) {
        const ImageSample& s = train_data[order[bi]];
        Tensor prob = model.forward(s.image);
        double l = hybrid_loss(loss, prob, s.mask);
        if (!std::isfinite(l)) {
          std::string ids;
          for (size_t bj = off; bj < bend; ++bj)
            ids += (bj > off ? "," : "") + train_data[order[bj]].id;
          throw Error(Errc::numeric,
                      strf("non-finite loss %g at step %lld (epoch %d, lr %g, batch [%s])", l,
                           static_cast<long long>(global_step), epoch, lr, ids.c_str()));
        }
        batch_loss += l * inv_b;
        Tensor dprob = hybrid_grad(loss, prob, s.mask);
        for (auto& v : dprob.data) v *= inv_b;
        model.backward(dprob);
      }
      opt.step(lr);
      hist.step_losses.push_back(batch_loss);
      loss_sum += batch_loss;
      ++batches;
      ++global_step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(batches);
    rec.val_f1 = validate(model, val_data, cfg.tau);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back(rec);

    if (hist.best_epoch == 0 || rec.val_f1 > hist.best_val_f1) {
      hist.best_epoch = epoch;
      hist.best_val_f1 = rec.val_f1;
      if (!checkpoint_path.empty()) {
        json meta = {{"epoch", epoch},
                     {"val_f1", rec.val_f1},
                     {"tau", cfg.tau},
                     {"seed", cfg.seed},
                     {"loss", loss_kind_name(loss.kind)},
                     {"lambda", loss.lambda}};
        save_checkpoint(checkpoint_path, model, meta);
        hist.checkpoint_path = checkpoint_path;
      }
    }
  }
  return hist;
}

}  // namespace sac
