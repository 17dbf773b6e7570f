#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/arch_spec.hpp"
#include "sac/common.hpp"
#include "sac/lora.hpp"
#include "sac/tensor.hpp"

namespace sac {

enum class Strategy { norm_only, decoder_only, lora, full, composite_cracksam, none };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::norm_only: return "norm_only";
    case Strategy::decoder_only: return "decoder_only";
    case Strategy::lora: return "lora";
    case Strategy::full: return "full";
    case Strategy::composite_cracksam: return "composite_cracksam";
    case Strategy::none: return "none";
  }
  return "?";
}

// One adapter injection target: groups tagged `site_tag` within the last
// `last_k` block indices (0 = every block).
struct LoraTarget {
  std::string site_tag;
  int last_k = 0;
};

struct TuningPlan {
  Strategy strategy = Strategy::none;
  int lora_rank = 0;
  std::vector<LoraTarget> lora_targets;

  bool uses_lora() const {
    return strategy == Strategy::lora || strategy == Strategy::composite_cracksam;
  }

  void validate() const {
    if (uses_lora()) {
      require(lora_rank > 0, Errc::config,
              std::string(strategy_name(strategy)) + " plan needs a positive lora rank");
      require(!lora_targets.empty(), Errc::config,
              std::string(strategy_name(strategy)) + " plan needs at least one lora target");
    } else {
      require(lora_rank == 0 && lora_targets.empty(), Errc::config,
              "lora options are only valid for lora/composite strategies");
    }
  }

  std::string describe() const {
    std::string s = strategy_name(strategy);
    if (uses_lora()) {
      s += strf("(r=%d", lora_rank);
      for (const auto& t : lora_targets)
        s += "," + t.site_tag + (t.last_k > 0 ? strf(":last%d", t.last_k) : std::string(":all"));
      s += ")";
    }
    return s;
  }
};

struct PlanOptions {
  int lora_rank = 0;
  std::vector<LoraTarget> lora_targets;
};

inline TuningPlan make_plan(const std::string& strategy, const PlanOptions& opt = {}) {
  TuningPlan p;
  if (strategy == "norm_only")
    p.strategy = Strategy::norm_only;
  else if (strategy == "decoder_only")
    p.strategy = Strategy::decoder_only;
  else if (strategy == "lora")
    p.strategy = Strategy::lora;
  else if (strategy == "full")
    p.strategy = Strategy::full;
  else if (strategy == "composite_cracksam")
    p.strategy = Strategy::composite_cracksam;
  else if (strategy == "none")
    p.strategy = Strategy::none;
  else
    throw Error(Errc::config, "unknown strategy '" + strategy + "'");

  if (p.strategy == Strategy::lora) {
    p.lora_rank = opt.lora_rank;
    p.lora_targets = opt.lora_targets;
  } else if (p.strategy == Strategy::composite_cracksam) {
    p.lora_rank = opt.lora_rank > 0 ? opt.lora_rank : 8;
    // encoder attention throughout, per the composite method's description
    p.lora_targets = opt.lora_targets.empty() ? std::vector<LoraTarget>{{"attention-qkv", 0}}
                                              : opt.lora_targets;
  } else {
    require(opt.lora_rank == 0 && opt.lora_targets.empty(), Errc::config,
            "strategy '" + strategy + "' takes no lora options");
  }
  p.validate();
  return p;
}

inline TuningPlan plan_from_json(const json& j) {
  PlanOptions opt;
  std::string strategy;
  try {
    strategy = j.at("strategy").get<std::string>();
    if (j.contains("lora_rank")) opt.lora_rank = j.at("lora_rank").get<int>();
    if (j.contains("lora_targets"))
      for (const auto& jt : j.at("lora_targets")) {
        LoraTarget t;
        t.site_tag = jt.at("site").get<std::string>();
        if (jt.contains("last_k")) t.last_k = jt.at("last_k").get<int>();
        opt.lora_targets.push_back(t);
      }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("plan: ") + e.what());
  }
  return make_plan(strategy, opt);
}

inline json plan_to_json(const TuningPlan& p) {
  json j;
  j["strategy"] = strategy_name(p.strategy);
  if (p.uses_lora()) {
    j["lora_rank"] = p.lora_rank;
    j["lora_targets"] = json::array();
    for (const auto& t : p.lora_targets)
      j["lora_targets"].push_back({{"site", t.site_tag}, {"last_k", t.last_k}});
  }
  return j;
}

// Adapter attachment resolved against a concrete spec/model.
struct AdapterSite {
  std::string group_name;
  std::int64_t d_in = 0;
  std::int64_t d_out = 0;
  int rank = 0;

  std::int64_t param_count() const { return lora_param_count(d_in, d_out, rank, 1); }
};

struct Selection {
  std::vector<std::string> base_groups;  // spec order
  std::vector<AdapterSite> adapters;     // spec order

  bool contains(const std::string& name) const {
    return std::find(base_groups.begin(), base_groups.end(), name) != base_groups.end();
  }
};

namespace detail {

inline std::vector<AdapterSite> resolve_adapters(const ArchitectureSpec& spec, const LoraTarget& t,
                                                 int rank) {
  std::vector<const ParamGroup*> candidates;
  for (const auto& g : spec.groups)
    if (g.has_tag(t.site_tag)) {
      require(g.shape.size() == 2, Errc::selection,
              "lora target group " + g.name + " is not a weight matrix");
      candidates.push_back(&g);
    }
  require(!candidates.empty(), Errc::selection,
          "plan references tag '" + t.site_tag + "' absent from spec " + spec.name);
  if (t.last_k > 0) {
    std::set<int> blocks;
    for (const auto* g : candidates) {
      int b = g->block_index();
      require(b >= 0, Errc::selection,
              "group " + g->name + " has no block index; cannot resolve last-k selection");
      blocks.insert(b);
    }
    std::vector<int> order(blocks.rbegin(), blocks.rend());
    if (static_cast<int>(order.size()) > t.last_k) order.resize(t.last_k);
    std::set<int> keep(order.begin(), order.end());
    std::vector<const ParamGroup*> filtered;
    for (const auto* g : candidates)
      if (keep.count(g->block_index())) filtered.push_back(g);
    candidates = filtered;
  }
  std::vector<AdapterSite> sites;
  for (const auto* g : candidates)
    sites.push_back({g->name, g->shape[1], g->shape[0], rank});  // shape = [d_out, d_in]
  return sites;
}

inline std::vector<std::string> groups_with(const ArchitectureSpec& spec, const char* what,
                                            bool (*pred)(const ParamGroup&)) {
  std::vector<std::string> out;
  for (const auto& g : spec.groups)
    if (pred(g)) out.push_back(g.name);
  require(!out.empty(), Errc::selection,
          std::string("plan references tag '") + what + "' absent from spec " + spec.name);
  return out;
}

}  // namespace detail

// Deterministic trainable set for (spec, plan); base weights stay frozen for
// LoRA strategies, adapters are the only additions.
inline Selection select_trainables(const ArchitectureSpec& spec, const TuningPlan& plan) {
  plan.validate();
  Selection sel;
  switch (plan.strategy) {
    case Strategy::none:
      return sel;
    case Strategy::full:
      for (const auto& g : spec.groups) sel.base_groups.push_back(g.name);
      return sel;
    case Strategy::norm_only:
      sel.base_groups = detail::groups_with(spec, "norm-*", [](const ParamGroup& g) { return g.is_norm(); });
      return sel;
    case Strategy::decoder_only:
      sel.base_groups =
          detail::groups_with(spec, "decoder", [](const ParamGroup& g) { return g.has_tag("decoder"); });
      return sel;
    case Strategy::lora:
      for (const auto& t : plan.lora_targets) {
        auto sites = detail::resolve_adapters(spec, t, plan.lora_rank);
        sel.adapters.insert(sel.adapters.end(), sites.begin(), sites.end());
      }
      return sel;
    case Strategy::composite_cracksam: {
      for (const auto& t : plan.lora_targets) {
        auto sites = detail::resolve_adapters(spec, t, plan.lora_rank);
        sel.adapters.insert(sel.adapters.end(), sites.begin(), sites.end());
      }
      sel.base_groups =
          detail::groups_with(spec, "decoder", [](const ParamGroup& g) { return g.has_tag("decoder"); });
      auto prompt = detail::groups_with(spec, "prompt-encoder",
                                        [](const ParamGroup& g) { return g.has_tag("prompt-encoder"); });
      sel.base_groups.insert(sel.base_groups.end(), prompt.begin(), prompt.end());
      return sel;
    }
  }
  throw Error(Errc::config, "unreachable strategy");
}

struct ParamBudget {
  std::int64_t trainable_count = 0;
  std::int64_t total_count = 0;
  double percent = 0.0;
  std::vector<std::pair<std::string, std::int64_t>> breakdown;
  // informational side counts (e.g. decoder with/without the prompt encoder)
  std::vector<std::pair<std::string, std::int64_t>> aux;
};

inline ParamBudget audit_budget(const ArchitectureSpec& spec, const TuningPlan& plan) {
  spec.validate();
  Selection sel = select_trainables(spec, plan);
  std::map<std::string, std::int64_t> sizes;
  for (const auto& g : spec.groups) sizes[g.name] = g.size();

  ParamBudget b;
  b.total_count = spec.sum_sizes();
  for (const auto& name : sel.base_groups) {
    b.trainable_count += sizes.at(name);
    b.breakdown.emplace_back(name, sizes.at(name));
  }
  for (const auto& site : sel.adapters) {
    b.trainable_count += site.param_count();
    b.breakdown.emplace_back("lora(" + site.group_name + ")", site.param_count());
  }
  b.percent = b.total_count > 0 ? 100.0 * static_cast<double>(b.trainable_count) /
                                      static_cast<double>(b.total_count)
                                : 0.0;

  if (plan.strategy == Strategy::decoder_only || plan.strategy == Strategy::composite_cracksam) {
    std::int64_t dec = 0, prompt = 0;
    for (const auto& g : spec.groups) {
      if (g.has_tag("decoder")) dec += g.size();
      if (g.has_tag("prompt-encoder")) prompt += g.size();
    }
    b.aux.emplace_back("decoder", dec);
    b.aux.emplace_back("decoder+prompt-encoder", dec + prompt);
  }
  return b;
}

// Bitwise freeze audit around >= 1 optimization step: every non-selected
// parameter identical, and (when anything is selected) at least one selected
// parameter changed.
struct FreezeReport {
  bool pass = false;
  std::size_t non_selected_changed = 0;
  std::size_t selected_changed = 0;
  std::string first_violation;
};

inline FreezeReport assert_frozen(const std::map<std::string, Tensor>& before,
                                  const std::map<std::string, Tensor>& after,
                                  const Selection& sel) {
  require(before.size() == after.size(), Errc::shape, "snapshot sizes differ");
  FreezeReport r;
  std::set<std::string> selected(sel.base_groups.begin(), sel.base_groups.end());
  for (const auto& site : sel.adapters) {
    selected.insert(site.group_name + ".lora_a");
    selected.insert(site.group_name + ".lora_b");
  }
  for (const auto& [name, t0] : before) {
    auto it = after.find(name);
    require(it != after.end(), Errc::shape, "snapshot missing parameter " + name);
    const Tensor& t1 = it->second;
    require(t0.shape == t1.shape, Errc::shape, "snapshot shape mismatch for " + name);
    bool identical = t0.numel() == t1.numel() &&
                     std::memcmp(t0.data.data(), t1.data.data(), t0.numel() * sizeof(double)) == 0;
    if (selected.count(name)) {
      if (!identical) ++r.selected_changed;
    } else if (!identical) {
      ++r.non_selected_changed;
      if (r.first_violation.empty()) r.first_violation = name;
    }
  }
  r.pass = r.non_selected_changed == 0 && (selected.empty() || r.selected_changed > 0);
  return r;
}

}  // namespace sac
