#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/common.hpp"
#include "sac/losses.hpp"
#include "sac/rng.hpp"

namespace sac {

using json = nlohmann::json;

// Expands "a:step:b" inclusively of both endpoints (values a + k*step <= b,
// within a small tolerance for fractional steps).
inline std::vector<double> expand_range(const std::string& text) {
  auto c1 = text.find(':');
  auto c2 = text.find(':', c1 + 1);
  require(c1 != std::string::npos && c2 != std::string::npos, Errc::parse,
          "range must look like a:step:b, got '" + text + "'");
  double a = 0, step = 0, b = 0;
  try {
    a = std::stod(text.substr(0, c1));
    step = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    b = std::stod(text.substr(c2 + 1));
  } catch (const std::exception&) {
    throw Error(Errc::parse, "range has non-numeric parts: '" + text + "'");
  }
  require(step > 0 && b >= a, Errc::parse, "range needs step > 0 and b >= a: '" + text + "'");
  std::vector<double> out;
  double tol = step * 1e-6;
  for (int k = 0;; ++k) {
    double v = a + k * step;
    if (v > b + tol) break;
    out.push_back(v);
  }
  return out;
}

// JSON list entries may be numbers or "a:step:b" strings.
inline std::vector<double> expand_value_list(const json& j) {
  std::vector<double> out;
  require(j.is_array(), Errc::parse, "expected a list of values/ranges");
  for (const auto& e : j) {
    if (e.is_string()) {
      auto vals = expand_range(e.get<std::string>());
      out.insert(out.end(), vals.begin(), vals.end());
    } else {
      out.push_back(e.get<double>());
    }
  }
  return out;
}

struct SearchSpace {
  LossKind loss_kind = LossKind::convex_hybrid;
  std::vector<double> lambda_values;  // ignored for bce/dice forms
  std::vector<double> lr_values;
  std::vector<int> batch_values;
  int trial_epochs = 4;
  double fraction = 0.0;  // (0,1] when used
  int trial_count = 0;    // explicit budget, takes precedence when > 0
  std::uint64_t seed = 0;
  Reduction reduction = Reduction::mean;
  double smooth = 1e-6;

  bool has_lambda() const {
    return loss_kind == LossKind::convex_hybrid || loss_kind == LossKind::weighted_hybrid;
  }
};

struct TrialConfig {
  LossForm loss;
  double lr = 0.0;
  int batch = 0;

  bool operator==(const TrialConfig& o) const {
    return loss.kind == o.loss.kind && loss.lambda == o.loss.lambda && lr == o.lr && batch == o.batch;
  }
};

// Cartesian product in lexicographic (lambda, lr, batch) order.
inline std::vector<TrialConfig> enumerate_grid(const SearchSpace& space) {
  require(!space.lr_values.empty(), Errc::config, "learning-rate list is empty");
  require(!space.batch_values.empty(), Errc::config, "batch list is empty");
  std::vector<double> lambdas = space.lambda_values;
  if (space.has_lambda())
    require(!lambdas.empty(), Errc::config, "lambda list is empty for a hybrid form");
  else
    lambdas = {0.0};  // single placeholder slot
  std::vector<TrialConfig> grid;
  for (double lam : lambdas)
    for (double lr : space.lr_values)
      for (int b : space.batch_values) {
        TrialConfig t;
        t.loss.kind = space.loss_kind;
        t.loss.lambda = space.has_lambda() ? lam : 0.0;
        t.loss.reduction = space.reduction;
        t.loss.smooth = space.smooth;
        t.loss.validate();
        t.lr = lr;
        t.batch = b;
        grid.push_back(t);
      }
  return grid;
}

// Uniform sampling without replacement; fraction budgets resolve to
// ceil(fraction * |grid|). Deterministic under seed.
inline std::vector<TrialConfig> sample_trials(const std::vector<TrialConfig>& grid,
                                              const SearchSpace& space) {
  require(!grid.empty(), Errc::config, "cannot sample from an empty grid");
  size_t k;
  if (space.trial_count > 0) {
    require(static_cast<size_t>(space.trial_count) <= grid.size(), Errc::budget,
            strf("budget %d exceeds grid size %zu", space.trial_count, grid.size()));
    k = static_cast<size_t>(space.trial_count);
  } else {
    require(space.fraction > 0.0 && space.fraction <= 1.0, Errc::config,
            strf("fraction must lie in (0,1], got %g", space.fraction));
    k = static_cast<size_t>(
        std::ceil(space.fraction * static_cast<double>(grid.size()) - 1e-12));
    if (k == 0) k = 1;
  }
  std::vector<size_t> idx(grid.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(space.seed);
  // partial Fisher-Yates: the first k slots are the draw, in draw order
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<TrialConfig> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back(grid[idx[i]]);
  return out;
}

struct TrialResult {
  int index = 0;  // position in the sampled list
  TrialConfig config;
  double val_f1 = std::nan("");
  bool failed = false;
  std::string note;
};

struct SearchResult {
  std::vector<TrialResult> trials;
  int best_index = -1;

  const TrialResult& best() const { return trials.at(static_cast<size_t>(best_index)); }
};

// Runs every sampled trial through `run_trial` (which returns a validation F1
// and may throw sac::Error). Failed trials are recorded and excluded from the
// argmax; ties go to the earlier trial in sampled order.
inline SearchResult run_search(const SearchSpace& space,
                               const std::function<double(const TrialConfig&)>& run_trial) {
  auto grid = enumerate_grid(space);
  auto sampled = sample_trials(grid, space);
  SearchResult res;
  for (size_t i = 0; i < sampled.size(); ++i) {
    TrialResult tr;
    tr.index = static_cast<int>(i);
    tr.config = sampled[i];
    try {
      tr.val_f1 = run_trial(sampled[i]);
      require(std::isfinite(tr.val_f1), Errc::numeric, "trial returned a non-finite F1");
    } catch (const Error& e) {
      tr.failed = true;
      tr.note = e.what();
    }
    res.trials.push_back(std::move(tr));
    if (!res.trials.back().failed &&
        (res.best_index < 0 || res.trials.back().val_f1 > res.trials[res.best_index].val_f1))
      res.best_index = static_cast<int>(i);
  }
  require(res.best_index >= 0, Errc::search, "every trial failed");
  return res;
}

inline SearchSpace search_space_from_json(const json& j) {
  SearchSpace s;
  try {
    s.loss_kind = parse_loss_kind(j.at("loss").get<std::string>());
    if (j.contains("lambda")) s.lambda_values = expand_value_list(j.at("lambda"));
    s.lr_values = expand_value_list(j.at("lr"));
    for (const auto& b : j.at("batch")) s.batch_values.push_back(b.get<int>());
    if (j.contains("epochs")) s.trial_epochs = j.at("epochs").get<int>();
    if (j.contains("fraction")) s.fraction = j.at("fraction").get<double>();
    if (j.contains("trials")) s.trial_count = j.at("trials").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("reduction"))
      s.reduction = j.at("reduction").get<std::string>() == "sum" ? Reduction::sum : Reduction::mean;
    if (j.contains("smooth")) s.smooth = j.at("smooth").get<double>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("search space: ") + e.what());
  }
  require(s.fraction > 0.0 || s.trial_count > 0, Errc::config,
          "search space needs a fraction or an explicit trial count");
  return s;
}

}  // namespace sac
