#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "apprisk/core/schema.hpp"
#include "apprisk/pipeline/pipeline.hpp"
#include "apprisk/service/server.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::pipeline;

namespace {

std::vector<std::string> cats(const AnalysisOutcome& o) {
  std::vector<std::string> out;
  for (auto c : o.categories) out.emplace_back(to_string(c));
  return out;
}

/// Rule-backed mock with the narrative task answered by `narrative`.
std::unique_ptr<llm::Gateway> gateway_with_narrative(std::function<std::string(const std::string&)> narrative) {
  auto rule = llm::make_rule_backed_mock();
  auto mock = std::make_shared<llm::MockBackend>();
  mock->on(llm::task_markers::kNarrative, std::move(narrative));
  mock->set_fallback([rule](const std::string& p) { return rule->generate(llm::CompletionRequest{p}).text; });
  auto gw = std::make_unique<llm::Gateway>();
  gw->register_backend("mock", mock);
  gw->set_default_backend("mock");
  return gw;
}

}  // namespace

TEST_CASE("enum strings round-trip") {
  for (auto g : {GateMode::None, GateMode::TreeOnly, GateMode::HistoryOnly, GateMode::Both}) {
    CHECK(gate_mode_from_string(to_string(g)) == g);
  }
  CHECK(validation_policy_from_string("advisory") == ValidationPolicy::Advisory);
  CHECK_THROWS(gate_mode_from_string("sometimes"));
}

TEST_CASE("case-study fixture end to end") {
  auto& rt = testing::shared_runtime();
  const auto app = testing::load_fixture("case_study_app");
  const auto o = run_analysis(app, rt.engine());
  REQUIRE(o.status == OutcomeStatus::Flagged);
  CHECK(cats(o) == std::vector<std::string>{"AdPopups", "AppMorphing"});

  const json& r = o.report;
  CHECK(validate_against_def(r, service::api_schema(), "Report").empty());
  CHECK(r.at("app_overview").at("analysis_window").at("start_date") == "2024-12-01");
  CHECK(r.at("app_overview").at("developer") == "Beijing *** Network Technology Co., Ltd.");
  std::set<std::string> chain_groups;
  for (const auto& e : r.at("evidence_chain")) chain_groups.insert(e.at("group").get<std::string>());
  CHECK(chain_groups.size() >= 4);
  std::set<std::string> precedent_ids;
  for (const auto& s : r.at("similar_delisted")) precedent_ids.insert(s.at("app_id").get<std::string>());
  CHECK(precedent_ids.count("C11***339"));
  CHECK(precedent_ids.count("C11***351"));
  for (const auto& s : r.at("similar_delisted")) CHECK(s.at("shared_indicators").size() >= 2);
  CHECK(r.at("narrative_source") == "llm");
  CHECK(narrative_gaps(r, r.at("narrative")).empty());
  check_report_invariants(r, app, true);

  // Byte-identical across runs.
  CHECK(outcome_to_json(run_analysis(app, rt.engine())).dump() == outcome_to_json(o).dump());
  CHECK_FALSE(outcome_to_json(o).contains("timings"));
}

TEST_CASE("evidence ids and references are consistent") {
  auto& rt = testing::shared_runtime();
  const auto o = run_analysis(testing::load_fixture("case_study_app"), rt.engine());
  const json& r = o.report;
  std::set<std::string> ids;
  for (const auto& e : r.at("evidence_chain")) ids.insert(e.at("evidence_id").get<std::string>());
  for (const auto& risk : r.at("risks")) {
    std::set<std::string> gs;
    for (const auto& e : r.at("evidence_chain")) {
      const auto& cs = e.at("categories");
      if (std::find(cs.begin(), cs.end(), risk.at("category")) != cs.end()) gs.insert(e.at("group"));
    }
    CHECK(gs.size() >= 2);
    CHECK(risk.at("evidence_groups").size() == gs.size());
  }
  CHECK(ids.count("E1"));
}

TEST_CASE("benign fixture is clean") {
  auto& rt = testing::shared_runtime();
  const auto o = run_analysis(testing::load_fixture("benign_app"), rt.engine());
  CHECK(o.status == OutcomeStatus::Clean);
  CHECK(o.report.is_null());
  CHECK(o.evidence_generation.total_tokens() == 0);
}

TEST_CASE("invalid record is an error outcome, not an exception") {
  auto& rt = testing::shared_runtime();
  AppRecord bad;
  const auto o = run_analysis(bad, rt.engine());
  CHECK(o.status == OutcomeStatus::Error);
  CHECK_FALSE(o.detail.empty());
}

TEST_CASE("narrative falls back to the template when the model omits evidence") {
  auto& rt = testing::shared_runtime();
  auto gw = gateway_with_narrative([](const std::string&) { return std::string("Looks risky."); });
  auto engine = rt.engine();
  engine.gateway = gw.get();
  const auto o = run_analysis(testing::load_fixture("case_study_app"), engine);
  REQUIRE(o.status == OutcomeStatus::Flagged);
  CHECK(o.report.at("narrative_source") == "template_fallback");
  CHECK(o.report.at("narrative") == template_narrative(o.report));
  CHECK(narrative_gaps(o.report, o.report.at("narrative")).empty());
  CHECK_FALSE(narrative_gaps(o.report, "Looks risky.").empty());
}

TEST_CASE("narrative repaired on the second try") {
  auto& rt = testing::shared_runtime();
  auto rule = llm::make_rule_backed_mock();
  auto calls = std::make_shared<int>(0);
  auto gw = gateway_with_narrative([rule, calls](const std::string& p) {
    return ++*calls == 1 ? std::string("Looks risky.") : rule->generate(llm::CompletionRequest{p}).text;
  });
  auto engine = rt.engine();
  engine.gateway = gw.get();
  const auto o = run_analysis(testing::load_fixture("case_study_app"), engine);
  CHECK(o.report.at("narrative_source") == "llm_repaired");
}

TEST_CASE("report invariants reject dangling references") {
  auto& rt = testing::shared_runtime();
  const auto app = testing::load_fixture("case_study_app");
  auto r = run_analysis(app, rt.engine()).report;
  r["evidence_chain"][0]["raw_refs"][0]["dimension"] = "made_up";
  CHECK_THROWS(check_report_invariants(r, app, true));
}

TEST_CASE("gates") {
  auto& rt = testing::shared_runtime();
  const auto corpus = testing::load_corpus();
  auto engine = rt.engine();

  SUBCASE("single-group decoys pass the ungated run only") {
    std::size_t ungated = 0, gated = 0;
    for (const auto& a : corpus) {
      if (a.app_id[0] != 'B') continue;
      engine.gate = GateMode::None;
      ungated += run_analysis(a, engine).status == OutcomeStatus::Flagged;
      engine.gate = GateMode::TreeOnly;
      gated += run_analysis(a, engine).status == OutcomeStatus::Flagged;
    }
    CHECK(ungated > gated);
  }
  SUBCASE("advisory keeps unprecedented candidates") {
    engine.gate = GateMode::Both;
    engine.policy = ValidationPolicy::Advisory;
    std::size_t strict_flags = 0, advisory_flags = 0;
    for (const auto& a : corpus) {
      engine.policy = ValidationPolicy::Strict;
      strict_flags += run_analysis(a, engine).categories.size();
      engine.policy = ValidationPolicy::Advisory;
      advisory_flags += run_analysis(a, engine).categories.size();
    }
    CHECK(advisory_flags > strict_flags);
  }
}

TEST_CASE("batch: duplicates, order and summary") {
  auto& rt = testing::shared_runtime();
  std::vector<AppRecord> apps{testing::load_fixture("case_study_app"), testing::load_fixture("benign_app"),
                              testing::load_fixture("benign_app")};
  const auto r = run_batch(apps, rt.engine(), 3);
  REQUIRE(r.outcomes.size() == 3);
  CHECK(r.outcomes[0].status == OutcomeStatus::Flagged);
  CHECK(r.outcomes[1].status == OutcomeStatus::Clean);
  CHECK(r.outcomes[2].status == OutcomeStatus::Error);
  CHECK(r.summary.flagged == 1);
  CHECK(r.summary.errors == 1);
  CHECK(r.summary.usage.apps >= 2);
}

TEST_CASE("label scoring") {
  AnalysisOutcome a{"A", OutcomeStatus::Flagged, {RiskCategory::AdPopups, RiskCategory::Malware}};
  AnalysisOutcome b{"B", OutcomeStatus::Flagged, {RiskCategory::Retention}};
  AnalysisOutcome c{"C", OutcomeStatus::Clean};
  LabelSet labels{{"A", {RiskCategory::AdPopups}}, {"C", {RiskCategory::ContentRisk}}};
  const auto s = score_outcomes({a, b, c}, labels);
  CHECK(s.true_positives == 1);
  CHECK(s.false_positives == 2);
  CHECK(s.planted == 2);
  CHECK(s.recall() == doctest::Approx(0.5));

  const auto path = testing::scratch_dir("labels") / "l.jsonl";
  std::ofstream(path) << R"({"app_id": "A", "labels": ["AdPopups"]})" << "\n\n"
                      << R"({"app_id": "B", "labels": []})" << "\n";
  const auto loaded = load_labels(path.string());
  CHECK(loaded.at("A") == std::set<RiskCategory>{RiskCategory::AdPopups});
  CHECK(loaded.at("B").empty());
}
