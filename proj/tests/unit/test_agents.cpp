#include <doctest.h>

#include <algorithm>

#include "apprisk/agents/agents.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::agents;

namespace {

const EvidenceSnippet* find_group(const std::vector<EvidenceSnippet>& xs, const FeatureGroupId& g) {
  auto it = std::find_if(xs.begin(), xs.end(), [&](const EvidenceSnippet& s) { return s.group == g; });
  return it == xs.end() ? nullptr : &*it;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("package relatedness") {
  const std::vector<std::string> allow{"com.android", "androidx"};
  CHECK_FALSE(is_unrelated_package("com.musiclib.tools", "com.musiclib.tools.player", allow));
  CHECK_FALSE(is_unrelated_package("com.musiclib.tools", "com.musiclib.other", allow));
  CHECK_FALSE(is_unrelated_package("com.musiclib.tools", "com.android.settings", allow));
  CHECK_FALSE(is_unrelated_package("com.musiclib.tools", "androidx", allow));
  CHECK(is_unrelated_package("com.musiclib.tools", "com.asdg.xwdd", allow));
  CHECK(is_unrelated_package("com.musiclib.tools", "com.androidfake.x", allow));
}

TEST_CASE("list splitting") {
  CHECK(split_list(" a, b;c\n\n d ,") == std::vector<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("spec validation") {
  AgentSpec s;
  s.group = groups::UserFeedback;
  s.mode = AgentMode::Llm;
  s.analyzer = analyzers::kUserFeedback;
  CHECK_FALSE(validate_spec(s).empty());
  s.template_id = "user_feedback";
  CHECK(validate_spec(s).empty());
  s.analyzer = "astrology";
  CHECK_FALSE(validate_spec(s).empty());
  AgentSpec t;
  t.group = groups::RuntimeMonitor;
  t.analyzer = analyzers::kThreshold;
  CHECK_FALSE(validate_spec(t).empty());
}

TEST_CASE("bundled registry covers every builtin group") {
  const auto& rt = testing::shared_runtime();
  for (const auto& g : FeatureGroupCatalog::builtin().ids()) {
    CAPTURE(g.name());
    CHECK(rt.registry.find(g) != nullptr);
  }
  CHECK(rt.registry.risk_factors == default_risk_factors());
}

TEST_CASE("case-study fixture evidence") {
  auto& rt = testing::shared_runtime();
  auto ctx = testing::agent_context(rt);
  const auto app = testing::load_fixture("case_study_app");
  const auto ev = run_all_agents(app, ctx);
  CHECK(ev.degraded_groups.empty());
  CHECK(std::is_sorted(ev.snippets.begin(), ev.snippets.end(), snippet_less));

  const auto* ep = find_group(ev.snippets, groups::ExecutionPatterns);
  REQUIRE(ep != nullptr);
  CHECK(contains(ep->summary, "from 2469 to 3084"));
  CHECK(contains(ep->summary, "com.asdg.xwdd"));
  CHECK(ep->indicators == std::vector<std::string>{"anomalous-launches", "malicious-callee"});

  const auto* ad = find_group(ev.snippets, groups::AppDistribution);
  REQUIRE(ad != nullptr);
  CHECK(contains(ad->summary, "C11***363"));
  CHECK(contains(ad->summary, "previously removed"));

  const auto* av = find_group(ev.snippets, groups::AntiVirusEngine);
  REQUIRE(av != nullptr);
  CHECK(contains(av->summary, "com.b**du.mo**ds.sdk"));

  std::vector<std::string> rm;
  for (const auto& s : ev.snippets) {
    if (s.group == groups::RuntimeMonitor) rm.push_back(s.summary);
  }
  REQUIRE(rm.size() == 2);
  CHECK(std::any_of(rm.begin(), rm.end(), [](const std::string& s) { return contains(s, "20.95"); }));
  CHECK(std::any_of(rm.begin(), rm.end(), [](const std::string& s) { return contains(s, "20109"); }));

  const auto* uf = find_group(ev.snippets, groups::UserFeedback);
  REQUIRE(uf != nullptr);
  CHECK(uf->producer == Producer::Agent);
  CHECK(uf->indicators == std::vector<std::string>{"advertising-related"});

  const auto* dc = find_group(ev.snippets, groups::Discrepancy);
  REQUIRE(dc != nullptr);
  CHECK(contains(dc->summary, "Tools"));
  CHECK(dc->indicators == std::vector<std::string>{"category-mismatch"});

  for (const auto& s : ev.snippets) {
    CHECK(validate_snippet(s).empty());
    for (const auto& r : s.raw_refs) CHECK(r.app_id == app.app_id);
  }
}

TEST_CASE("benign fixture yields no evidence") {
  auto& rt = testing::shared_runtime();
  const auto ev = run_all_agents(testing::load_fixture("benign_app"), testing::agent_context(rt));
  CHECK(ev.snippets.empty());
  CHECK(ev.degraded_groups.empty());
}

TEST_CASE("model-backed groups degrade without a gateway") {
  auto& rt = testing::shared_runtime();
  auto ctx = testing::agent_context(rt);
  ctx.gateway = nullptr;
  const auto ev = run_all_agents(testing::load_fixture("case_study_app"), ctx);
  CHECK(ev.degraded_groups == std::vector<FeatureGroupId>{groups::Discrepancy, groups::UserFeedback});
  CHECK(find_group(ev.snippets, groups::UserFeedback) == nullptr);
  CHECK(find_group(ev.snippets, groups::ExecutionPatterns) != nullptr);
}

TEST_CASE("a factor outside the vocabulary degrades the feedback agent") {
  auto& rt = testing::shared_runtime();
  llm::Gateway gw;
  gw.register_backend("s", std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{
                               R"({"Quality": "High", "Tendency": "Negative",
                                   "RiskInfo": {"Snippets": "x", "Risk Factor": "Astrology"}})"}));
  gw.set_default_backend("s");
  auto ctx = testing::agent_context(rt);
  ctx.gateway = &gw;
  const auto* spec = rt.registry.find(groups::UserFeedback);
  const auto r = run_group_agent(*spec, testing::load_fixture("case_study_app"), ctx);
  CHECK(r.degraded);
  CHECK(r.snippets.empty());
}

TEST_CASE("feedback snippets split on the passage separator") {
  auto& rt = testing::shared_runtime();
  llm::Gateway gw;
  gw.register_backend("s", std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{
                               R"({"Quality": "High", "Tendency": "Negative",
                                   "RiskInfo": {"Snippets": "ads everywhere | ... | banner on top",
                                                "Risk Factor": "Advertising related"}})"}));
  gw.set_default_backend("s");
  auto ctx = testing::agent_context(rt);
  ctx.gateway = &gw;
  const auto r = run_group_agent(*rt.registry.find(groups::UserFeedback), testing::load_fixture("case_study_app"), ctx);
  REQUIRE(r.snippets.size() == 2);
  CHECK(r.snippets[0].indicators == std::vector<std::string>{"advertising-related"});
}

TEST_CASE("text flags map labels to indicators") {
  auto& rt = testing::shared_runtime();
  auto app = testing::load_fixture("benign_app");
  for (auto& v : app.features[groups::Screenshot]) {
    if (v.dimension == "screenshot_labels") v.value = std::string("menu, Gambling, casino, nudity");
  }
  const auto ev = run_all_agents(app, testing::agent_context(rt));
  std::vector<std::string> inds;
  for (const auto& s : ev.snippets) inds.insert(inds.end(), s.indicators.begin(), s.indicators.end());
  std::sort(inds.begin(), inds.end());
  CHECK(inds == std::vector<std::string>{"explicit-content", "gambling-content"});
}
