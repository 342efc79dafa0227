#include <doctest.h>

#include <random>
#include <set>

#include "apprisk/service/runtime.hpp"
#include "apprisk/tree/tree.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::tree;

namespace {

retrieval::DelistedCase hist(const std::string& id, RiskCategory cat, std::vector<FeatureGroupId> groups) {
  retrieval::DelistedCase c;
  c.app_id = id;
  c.risk_category = cat;
  c.groups = std::move(groups);
  c.indicators = {"x"};
  return c;
}

EvidenceSnippet snip(const FeatureGroupId& g, const std::string& summary = "s") {
  EvidenceSnippet s;
  s.group = g;
  s.dimension = "d";
  s.summary = summary;
  s.raw_refs = {{"A", "d", "src"}};
  s.indicators = {"x"};
  return s;
}

json small_config() {
  return json::parse(R"({
    "schema_version": "1",
    "min_weight": 0.3,
    "leaves": {"UserFeedback": ["comments"], "ExecutionPatterns": ["launch_count"],
               "RuntimeMonitor": ["popup_count"], "DynamicLoad": ["dynamic_code_loads"]},
    "roots": [
      {"category": "AdPopups", "rules": [
        {"rule_id": "R1", "groups": ["UserFeedback", "ExecutionPatterns"], "provenance": "synthetic"},
        {"rule_id": "R2", "groups": ["UserFeedback", "RuntimeMonitor"], "provenance": "synthetic"}]}
    ]
  })");
}

}  // namespace

TEST_CASE("bipartite weights are per-category case fractions") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns}),
      hist("b", RiskCategory::AdPopups, {groups::UserFeedback}),
      hist("c", RiskCategory::AdPopups, {groups::UserFeedback, groups::RuntimeMonitor}),
      hist("d", RiskCategory::AdPopups, {groups::ExecutionPatterns}),
      hist("e", RiskCategory::Malware, {groups::NetworkFeature}),
  };
  const auto m = build_bipartite_map(h);
  CHECK(m.weight(groups::UserFeedback, RiskCategory::AdPopups) == doctest::Approx(0.75));
  CHECK(m.weight(groups::ExecutionPatterns, RiskCategory::AdPopups) == doctest::Approx(0.5));
  CHECK(m.weight(groups::RuntimeMonitor, RiskCategory::AdPopups) == doctest::Approx(0.25));
  CHECK(m.weight(groups::NetworkFeature, RiskCategory::Malware) == doctest::Approx(1.0));
  CHECK(m.weight(groups::NetworkFeature, RiskCategory::AdPopups) == 0.0);
  CHECK(m.top_k(RiskCategory::AdPopups, 2) ==
        std::vector<FeatureGroupId>{groups::UserFeedback, groups::ExecutionPatterns});
  CHECK(BipartiteMap::from_json(m.to_json()).edges() == m.edges());
  CHECK_THROWS(build_bipartite_map({}));
}

TEST_CASE("ties rank alphabetically") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::Retention, {groups::UsagePatterns, groups::DynamicLoad})};
  CHECK(build_bipartite_map(h).top_k(RiskCategory::Retention, 2) ==
        std::vector<FeatureGroupId>{groups::DynamicLoad, groups::UsagePatterns});
}

TEST_CASE("pruning keeps at least one group") {
  const BipartiteMap m({{groups::UserFeedback, RiskCategory::AdPopups, 0.02},
                        {groups::RuntimeMonitor, RiskCategory::AdPopups, 0.04}});
  std::vector<GroupNode> nodes{{groups::UserFeedback, {"comments"}, 0}, {groups::RuntimeMonitor, {"popup_count"}, 0}};
  const auto kept = prune_features(m, RiskCategory::AdPopups, nodes, 0.05);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].group == groups::RuntimeMonitor);
  CHECK(prune_features(m, RiskCategory::AdPopups, nodes, 0.0).size() == 2);
}

TEST_CASE("a rule naming a pruned group is rejected") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns, groups::RuntimeMonitor}),
      hist("b", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns}),
      hist("c", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns}),
      hist("d", RiskCategory::AdPopups, {groups::UserFeedback}),
  };
  // RuntimeMonitor weight 0.25 < 0.3, and R2 needs it.
  CHECK_THROWS_WITH(build_tree(small_config(), build_bipartite_map(h)), doctest::Contains("R2"));
  auto cfg = small_config();
  cfg["min_weight"] = 0.2;
  const auto t = build_tree(cfg, build_bipartite_map(h));
  REQUIRE(t.roots.size() == 1);
  CHECK(t.roots[0].groups.size() == 3);
  CHECK(RiskTree::from_json(t.to_json()) == t);
}

TEST_CASE("config errors") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns, groups::RuntimeMonitor})};
  const auto m = build_bipartite_map(h);
  auto cfg = small_config();
  cfg["roots"][0]["rules"][0]["groups"] = {"UserFeedback", "UserFeedback"};
  CHECK_THROWS_WITH(build_tree(cfg, m), doctest::Contains("two distinct"));
  cfg = small_config();
  cfg["schema_version"] = "9";
  CHECK_THROWS(build_tree(cfg, m));
  cfg = small_config();
  cfg["leaves"]["DynamicLoad"] = {"comments"};
  CHECK_THROWS_WITH(build_tree(cfg, m), doctest::Contains("both"));
}

TEST_CASE("a root fires only when a whole rule is covered") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns, groups::RuntimeMonitor})};
  const auto t = build_tree(small_config(), build_bipartite_map(h));

  const std::vector<EvidenceSnippet> only_uf{snip(groups::UserFeedback), snip(groups::UserFeedback, "t")};
  CHECK(evaluate(t, only_uf).empty());

  const std::vector<EvidenceSnippet> both{snip(groups::RuntimeMonitor), snip(groups::UserFeedback),
                                          snip(groups::ExecutionPatterns), snip(groups::DynamicLoad)};
  const auto c = evaluate(t, both);
  REQUIRE(c.size() == 1);
  CHECK(c[0].satisfied_rule == "R1");
  // Snippets come from every satisfied rule, never from unrelated groups.
  CHECK(groups_of(c[0].snippets) ==
        std::vector<FeatureGroupId>{groups::ExecutionPatterns, groups::RuntimeMonitor, groups::UserFeedback});
}

TEST_CASE("evaluation ignores snippet order") {
  const std::vector<retrieval::DelistedCase> h{
      hist("a", RiskCategory::AdPopups, {groups::UserFeedback, groups::ExecutionPatterns, groups::RuntimeMonitor})};
  const auto t = build_tree(small_config(), build_bipartite_map(h));
  std::vector<EvidenceSnippet> s{snip(groups::RuntimeMonitor, "b"), snip(groups::UserFeedback, "a"),
                                 snip(groups::UserFeedback, "c")};
  const auto first = evaluate(t, s);
  std::mt19937 rng(5);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(s.begin(), s.end(), rng);
    CHECK(evaluate(t, s) == first);
  }
}

TEST_CASE("bundled tree reproduces the top-three groups per category") {
  const auto cfg = testing::repo_config();
  retrieval::HashingEmbedder e(cfg.embedding_dim);
  const auto t = build_tree_from_files(cfg.resolve(cfg.tree_config).string(), cfg.resolve(cfg.history).string(), e,
                                       retrieval::IndicatorNormalizer::defaults());
  CHECK(t.roots.size() == 8);
  const std::map<RiskCategory, std::vector<std::string>> expected{
      {RiskCategory::AdPopups, {"UserFeedback", "ExecutionPatterns", "DynamicLoad"}},
      {RiskCategory::UnexpectedPopups, {"RuntimeMonitor", "StaticAnalysis", "ExecutionPatterns"}},
      {RiskCategory::Retention, {"RuntimeMonitor", "DynamicLoad", "StoreMetadata"}},
      {RiskCategory::AppMorphing, {"UserFeedback", "ExecutionPatterns", "Discrepancy"}},
      {RiskCategory::IllegalFeatures, {"UserFeedback", "StoreMetadata", "Blacklist"}},
      {RiskCategory::ContentRisk, {"UserFeedback", "Screenshot", "StoreMetadata"}},
      {RiskCategory::AppCounterfeiting, {"AppSimilarity", "UserFeedback", "StoreMetadata"}},
      {RiskCategory::Malware, {"RuntimeMonitor", "AppDistribution", "NetworkFeature"}},
  };
  for (const auto& root : t.roots) {
    CAPTURE(to_string(root.category));
    std::vector<std::string> top;
    for (std::size_t i = 0; i < 3 && i < root.groups.size(); ++i) top.push_back(root.groups[i].group.name());
    CHECK(top == expected.at(root.category));
    for (const auto& rule : root.rules) CHECK(rule.required_groups.size() >= 2);
  }
  // Same inputs, same version.
  CHECK(build_tree_from_files(cfg.resolve(cfg.tree_config).string(), cfg.resolve(cfg.history).string(), e,
                              retrieval::IndicatorNormalizer::defaults())
            .version == t.version);
}

TEST_CASE("fuzzed snippet sets never fire on fewer than two groups") {
  const auto cfg = testing::repo_config();
  retrieval::HashingEmbedder e(cfg.embedding_dim);
  const auto t = build_tree_from_files(cfg.resolve(cfg.tree_config).string(), cfg.resolve(cfg.history).string(), e,
                                       retrieval::IndicatorNormalizer::defaults());
  const auto ids = FeatureGroupCatalog::builtin().ids();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<EvidenceSnippet> s;
    const int n = static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) s.push_back(snip(ids[rng() % ids.size()], std::to_string(i)));
    for (const auto& c : evaluate(t, s)) CHECK(groups_of(c.snippets).size() >= 2);
  }
}
