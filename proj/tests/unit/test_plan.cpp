#include <doctest.h>

#include <set>

#include "sac/arch_spec.hpp"
#include "sac/plan.hpp"

using namespace sac;

namespace {

std::string sam_spec_path() { return std::string(SAC_DATA_DIR) + "/sam_vitb.json"; }

ArchitectureSpec tiny_spec() {
  // 4-block toy layout: 8 block norms + 2 decoder norms
  ArchitectureSpec s;
  s.name = "tiny";
  for (int i = 0; i < 4; ++i) {
    std::string b = "block:" + std::to_string(i);
    s.groups.push_back({strf("blocks.%d.norm1", i), {2, 16}, {"encoder", "norm-layer", b}});
    s.groups.push_back({strf("blocks.%d.qkv.weight", i), {48, 16}, {"encoder", "attention-qkv", b}});
    s.groups.push_back({strf("blocks.%d.mlp2.weight", i), {16, 64}, {"encoder", "mlp-linear2", b}});
    s.groups.push_back({strf("blocks.%d.norm2", i), {2, 16}, {"encoder", "norm-layer", b}});
  }
  s.groups.push_back({"decoder.conv.weight", {8, 16, 3, 3}, {"decoder"}});
  s.groups.push_back({"decoder.norm1", {2, 8}, {"decoder", "norm-group"}});
  s.groups.push_back({"decoder.norm2", {2, 8}, {"decoder", "norm-group"}});
  s.groups.push_back({"prompt.embed", {4, 16}, {"prompt-encoder"}});
  s.validate();
  return s;
}

}  // namespace

TEST_CASE("make_plan validation") {
  TuningPlan p = make_plan("norm_only");
  CHECK(p.strategy == Strategy::norm_only);
  CHECK_THROWS_AS(make_plan("magic"), Error);
  CHECK_THROWS_AS(make_plan("lora", {8, {}}), Error);               // no targets
  CHECK_THROWS_AS(make_plan("lora", {0, {{"attention-qkv", 2}}}), Error);  // no rank
  CHECK_THROWS_AS(make_plan("norm_only", {8, {}}), Error);          // stray lora options

  TuningPlan comp = make_plan("composite_cracksam");
  CHECK(comp.lora_rank == 8);  // defaults
  CHECK(comp.lora_targets.size() == 1);
  CHECK(comp.lora_targets[0].site_tag == "attention-qkv");

  TuningPlan none = make_plan("none");
  Selection sel = select_trainables(tiny_spec(), none);
  CHECK(sel.base_groups.empty());
  CHECK(sel.adapters.empty());
}

TEST_CASE("norm_only selects exactly the norm-tagged groups") {
  ArchitectureSpec spec = tiny_spec();
  Selection sel = select_trainables(spec, make_plan("norm_only"));
  CHECK(sel.base_groups.size() == 10);  // 8 block norms + 2 decoder norms
  for (const auto& name : sel.base_groups) CHECK(name.find("norm") != std::string::npos);

  // determinism / idempotence
  Selection sel2 = select_trainables(spec, make_plan("norm_only"));
  CHECK(sel.base_groups == sel2.base_groups);
}

TEST_CASE("last-k lora selection resolves by descending block index") {
  ArchitectureSpec spec = tiny_spec();
  Selection sel = select_trainables(spec, make_plan("lora", {8, {{"attention-qkv", 2}}}));
  CHECK(sel.base_groups.empty());  // base weights frozen
  CHECK(sel.adapters.size() == 2);
  std::set<std::string> names;
  for (const auto& a : sel.adapters) names.insert(a.group_name);
  CHECK(names.count("blocks.2.qkv.weight") == 1);
  CHECK(names.count("blocks.3.qkv.weight") == 1);

  CHECK_THROWS_AS(select_trainables(spec, make_plan("lora", {4, {{"missing-tag", 1}}})), Error);
}

TEST_CASE("last-2 lora on the vit-b spec lands on blocks 10 and 11") {
  ArchitectureSpec sam = load_arch_spec(sam_spec_path());
  Selection sel = select_trainables(sam, make_plan("lora", {8, {{"attention-qkv", 2}}}));
  REQUIRE(sel.adapters.size() == 2);
  for (const auto& a : sel.adapters) {
    bool ten = a.group_name.find("blocks.10.") != std::string::npos;
    bool eleven = a.group_name.find("blocks.11.") != std::string::npos;
    CHECK((ten || eleven));
  }
}

TEST_CASE("published lora budget rows reproduce exactly") {
  ArchitectureSpec sam = load_arch_spec(sam_spec_path());
  auto count = [&](const char* site, int last_k, int rank) {
    return audit_budget(sam, make_plan("lora", {rank, {{site, last_k}}})).trainable_count;
  };
  CHECK(count("mlp-linear2", 1, 8) == 30720);
  CHECK(count("mlp-linear2", 1, 16) == 61440);
  CHECK(count("attention-qkv", 2, 8) == 49152);
  CHECK(count("attention-qkv", 2, 16) == 98304);
  CHECK(count("attention-qkv", 4, 8) == 98304);
  CHECK(count("attention-qkv", 4, 16) == 196608);
}

TEST_CASE("norm and decoder budgets land in the published windows") {
  ArchitectureSpec sam = load_arch_spec(sam_spec_path());

  ParamBudget norm = audit_budget(sam, make_plan("norm_only"));
  CHECK(norm.trainable_count >= 41000 * 0.9);
  CHECK(norm.trainable_count <= 41000 * 1.1);
  CHECK(norm.percent >= 0.0458 * 0.9);
  CHECK(norm.percent <= 0.0458 * 1.1);
  // encoder block norms alone: 12 blocks x 2 norms x (2 x 768)
  std::int64_t block_norms = 0;
  for (const auto& [name, n] : norm.breakdown)
    if (name.find("encoder.blocks") != std::string::npos) block_norms += n;
  CHECK(block_norms == 12 * 2 * 2 * 768);

  ParamBudget dec = audit_budget(sam, make_plan("decoder_only"));
  CHECK(dec.trainable_count >= 3.7e6 * 0.9);
  CHECK(dec.trainable_count <= 3.7e6 * 1.1);
  CHECK(dec.percent >= 4.174 * 0.9);
  CHECK(dec.percent <= 4.174 * 1.1);

  ParamBudget comp = audit_budget(sam, make_plan("composite_cracksam"));
  CHECK(comp.trainable_count >= 4.0e6 * 0.9);
  CHECK(comp.trainable_count <= 4.0e6 * 1.1);

  ParamBudget none = audit_budget(sam, make_plan("none"));
  CHECK(none.trainable_count == 0);
  CHECK(none.percent == 0.0);
  CHECK(none.total_count == sam.sum_sizes());
}

TEST_CASE("architecture spec invariants") {
  ArchitectureSpec dup;
  dup.name = "dup";
  dup.groups.push_back({"a", {2}, {}});
  dup.groups.push_back({"a", {3}, {}});
  CHECK_THROWS_AS(dup.validate(), Error);

  ArchitectureSpec off;
  off.name = "off";
  off.total_params = 200;
  off.groups.push_back({"a", {100}, {}});
  CHECK_THROWS_AS(off.validate(), Error);

  ArchitectureSpec twonorm;
  twonorm.name = "twonorm";
  twonorm.groups.push_back({"a", {4}, {"norm-layer", "norm-batch"}});
  CHECK_THROWS_AS(twonorm.validate(), Error);

  ArchitectureSpec ok;
  ok.name = "ok";
  ok.total_params = 100;  // exact
  ok.groups.push_back({"a", {10, 10}, {"encoder"}});
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("assert_frozen verdicts") {
  std::map<std::string, Tensor> before, after;
  before["a"] = Tensor({2}, {1.0, 2.0});
  before["b"] = Tensor({2}, {3.0, 4.0});
  after = before;

  Selection sel;
  sel.base_groups = {"a"};

  // nothing changed: fails the "something selected changed" clause
  CHECK_FALSE(assert_frozen(before, after, sel).pass);

  after["a"][0] = 9.0;
  CHECK(assert_frozen(before, after, sel).pass);

  after["b"][1] = 7.0;  // frozen param drifted
  FreezeReport r = assert_frozen(before, after, sel);
  CHECK_FALSE(r.pass);
  CHECK(r.first_violation == "b");

  // empty selection: pass iff nothing changed at all
  Selection none;
  CHECK(assert_frozen(before, before, none).pass);
  CHECK_FALSE(assert_frozen(before, after, none).pass);

  std::map<std::string, Tensor> bad = before;
  bad["a"] = Tensor({3});
  CHECK_THROWS_AS(assert_frozen(before, bad, sel), Error);
}
