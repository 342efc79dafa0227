#include <doctest.h>

#include <fstream>

#include "apprisk/core/schema.hpp"
#include "apprisk/service/server.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::service;

namespace {

struct Stack {
  std::filesystem::path dir;
  std::unique_ptr<Runtime> rt;
  std::unique_ptr<ReportStore> store;
  std::unique_ptr<Service> svc;

  explicit Stack(const std::string& tag, std::string token = {}) : dir(testing::scratch_dir(tag)) {
    auto cfg = testing::repo_config();
    cfg.index_dir = (dir / "index").string();
    rt = Runtime::create(cfg);
    reopen_store(std::move(token));
  }

  void reopen_store(std::string token = {}) {
    svc.reset();
    store.reset();
    store = ReportStore::open(dir / "store", *rt->index, *rt->embedder, rt->normalizer);
    ServerOptions o;
    o.api_token = std::move(token);
    svc = std::make_unique<Service>(*rt, *store, o);
  }

  ApiResponse call(const std::string& method, const std::string& path, const json& body = nullptr,
                   std::multimap<std::string, std::string> headers = {},
                   std::multimap<std::string, std::string> query = {}) {
    return svc->handle(method, path, query, body.is_null() ? std::string{} : body.dump(), headers);
  }
};

json record_json(const std::string& fixture) { return json(testing::load_fixture(fixture)); }

void check_def(const json& body, const std::string& def) {
  const auto issues = validate_against_def(body, api_schema(), def);
  CAPTURE(def);
  const std::string first_issue = issues.empty() ? "" : issues.front();
  CAPTURE(first_issue);
  CHECK(issues.empty());
}

json confirm(const std::string& analyst = "a1") { return json{{"decision", "confirm"}, {"analyst_id", analyst}}; }

}  // namespace

TEST_CASE("health and index stats conform") {
  Stack s("health");
  auto r = s.call("GET", "/v1/health");
  CHECK(r.status == 200);
  check_def(r.body, "Health");
  CHECK(r.body.at("index_version") == 52);
  r = s.call("GET", "/v1/index/stats");
  CHECK(r.status == 200);
  check_def(r.body, "IndexStats");
  CHECK(s.call("POST", "/v1/health").status == 405);
  CHECK(s.call("GET", "/v1/nowhere").status == 404);
}

TEST_CASE("analyze: flagged, clean and bad input") {
  Stack s("analyze");
  auto r = s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  REQUIRE(r.status == 200);
  check_def(r.body, "AnalysisOutcome");
  CHECK(r.body.at("status") == "flagged");
  CHECK(r.body.at("report_id") == "R000001");

  r = s.call("POST", "/v1/apps/analyze", record_json("benign_app"));
  CHECK(r.status == 200);
  check_def(r.body, "AnalysisOutcome");
  CHECK(r.body.at("report_id").is_null());

  r = s.svc->handle("POST", "/v1/apps/analyze", {}, "{not json", {});
  CHECK(r.status == 400);
  check_def(r.body, "Error");
  CHECK(s.call("POST", "/v1/apps/analyze", json{{"app_id", "X"}}).status == 400);
  auto broken = record_json("benign_app");
  broken["collected_at"] = {{"start", 10}, {"end", 5}};
  r = s.call("POST", "/v1/apps/analyze", broken);
  CHECK(r.status == 400);
  CHECK(r.body.at("error").at("message").get<std::string>().find("invalid record") != std::string::npos);
  CHECK(s.call("GET", "/v1/apps/analyze").status == 405);
}

TEST_CASE("bearer token guards everything but health") {
  Stack s("auth", "sekret");
  CHECK(s.call("GET", "/v1/health").status == 200);
  CHECK(s.call("GET", "/v1/reports").status == 401);
  CHECK(s.call("GET", "/v1/reports", nullptr, {{"Authorization", "Bearer nope"}}).status == 401);
  CHECK(s.call("GET", "/v1/reports", nullptr, {{"Authorization", "Bearer sekret"}}).status == 200);
}

TEST_CASE("idempotent analyze and decision") {
  Stack s("idem");
  const std::multimap<std::string, std::string> key{{"Idempotency-Key", "k1"}};
  const auto a = s.call("POST", "/v1/apps/analyze", record_json("case_study_app"), key);
  const auto b = s.call("POST", "/v1/apps/analyze", record_json("case_study_app"), key);
  CHECK(a.body.at("report_id") == b.body.at("report_id"));
  CHECK(s.store->report_count() == 1);
  CHECK(s.call("POST", "/v1/apps/analyze", record_json("case_study_app")).body.at("report_id") == "R000002");

  const std::multimap<std::string, std::string> dkey{{"Idempotency-Key", "d1"}};
  const auto d1 = s.call("POST", "/v1/reports/R000001/decision", confirm(), dkey);
  REQUIRE(d1.status == 200);
  check_def(d1.body, "DecisionResult");
  CHECK_FALSE(d1.body.at("replayed").get<bool>());
  const auto d2 = s.call("POST", "/v1/reports/R000001/decision", confirm(), dkey);
  CHECK(d2.status == 200);
  CHECK(d2.body.at("replayed").get<bool>());
  CHECK(d2.body.at("index_version") == d1.body.at("index_version"));
  CHECK(s.rt->index->version() == 54);
}

TEST_CASE("decision errors") {
  Stack s("decide-errors");
  s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  CHECK(s.call("POST", "/v1/reports/R000999/decision", confirm()).status == 404);
  CHECK(s.call("POST", "/v1/reports/R000001/decision", json{{"decision", "maybe"}, {"analyst_id", "a"}}).status ==
        400);
  CHECK(s.call("POST", "/v1/reports/R000001/decision", json{{"decision", "confirm"}}).status == 400);
  auto mismatched = confirm();
  mismatched["report_id"] = "R000002";
  CHECK(s.call("POST", "/v1/reports/R000001/decision", mismatched).status == 400);
  CHECK(s.call("GET", "/v1/reports/R000001/decision").status == 405);

  CHECK(s.call("POST", "/v1/reports/R000001/decision", json{{"decision", "reject"}, {"analyst_id", "a"}}).status ==
        200);
  CHECK(s.rt->index->version() == 52);
  const auto again = s.call("POST", "/v1/reports/R000001/decision", confirm());
  CHECK(again.status == 409);
  check_def(again.body, "Error");
  auto sup = confirm();
  sup["supersede"] = true;
  CHECK(s.call("POST", "/v1/reports/R000001/decision", sup).status == 200);
  CHECK(s.rt->index->version() == 54);
}

TEST_CASE("report listing and detail") {
  Stack s("list");
  s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  s.call("POST", "/v1/apps/analyze", record_json("case_study_clone"));
  auto r = s.call("GET", "/v1/reports");
  REQUIRE(r.status == 200);
  check_def(r.body, "ReportList");
  CHECK(r.body.at("total") == 2);
  r = s.call("GET", "/v1/reports", nullptr, {}, {{"page_size", "1"}, {"page", "2"}});
  CHECK(r.body.at("items").size() == 1);
  CHECK(s.call("GET", "/v1/reports", nullptr, {}, {{"page", "0"}}).status == 400);
  CHECK(s.call("GET", "/v1/reports", nullptr, {}, {{"status", "weird"}}).status == 400);
  CHECK(s.call("GET", "/v1/reports", nullptr, {}, {{"category", "Nope"}}).status == 400);
  CHECK(s.call("GET", "/v1/reports", nullptr, {}, {{"category", "Malware"}}).body.at("total") == 0);

  s.call("POST", "/v1/reports/R000001/decision", confirm());
  CHECK(s.call("GET", "/v1/reports").body.at("total") == 1);
  CHECK(s.call("GET", "/v1/reports", nullptr, {}, {{"status", "confirmed"}}).body.at("total") == 1);

  r = s.call("GET", "/v1/reports/R000001");
  REQUIRE(r.status == 200);
  check_def(r.body, "ReportDetail");
  CHECK(r.body.at("status") == "confirmed");
  CHECK(s.call("GET", "/v1/reports/R000404").status == 404);
}

TEST_CASE("a confirmed report becomes a precedent for its clone") {
  Stack s("loop");
  s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  const auto d = s.call("POST", "/v1/reports/R000001/decision", confirm());
  REQUIRE(d.status == 200);
  CHECK(d.body.at("appended") == json{"C11***177/AdPopups", "C11***177/AppMorphing"});
  const auto clone = s.call("POST", "/v1/apps/analyze", record_json("case_study_clone"));
  REQUIRE(clone.body.at("status") == "flagged");
  bool seen = false;
  for (const auto& p : clone.body.at("report").at("similar_delisted")) seen |= p.at("app_id") == "C11***177";
  CHECK(seen);
  CHECK(s.store->audit().ok());
}

TEST_CASE("a confirm the index refuses records nothing") {
  Stack s("refuse");
  s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  retrieval::HashingEmbedder narrow(16);
  auto store = ReportStore::open(s.dir / "store", *s.rt->index, narrow, s.rt->normalizer);
  Service svc(*s.rt, *store);
  const auto r = svc.handle("POST", "/v1/reports/R000001/decision", {}, confirm().dump());
  CHECK(r.status == 500);
  CHECK(s.rt->index->version() == 52);
  CHECK_FALSE(store->decision("R000001"));
  s.reopen_store();
  CHECK_FALSE(s.store->decision("R000001"));
  CHECK(s.store->recovered() == 0);
}

TEST_CASE("journal recovery") {
  Stack s("recover");
  s.call("POST", "/v1/apps/analyze", record_json("case_study_app"));
  const auto log = s.dir / "store" / "store.log.jsonl";

  SUBCASE("intent without commit rolls forward") {
    AnalystDecision d{"R000001", Decision::Confirm, "a1", "", 1735000000, false};
    std::ofstream(log, std::ios::app) << json{{"type", "intent"}, {"seq", 100}, {"request_id", "rq"}, {"decision", d}}.dump()
                                      << "\n";
    s.reopen_store();
    CHECK(s.store->recovered() == 1);
    REQUIRE(s.store->decision("R000001"));
    CHECK(s.rt->index->contains("C11***177", RiskCategory::AdPopups));
    CHECK(s.store->audit().ok());
    // The idempotency record survives recovery.
    const auto r = s.call("POST", "/v1/reports/R000001/decision", confirm(), {{"Idempotency-Key", "rq"}});
    CHECK(r.body.at("replayed").get<bool>());
    s.reopen_store();
    CHECK(s.store->recovered() == 0);
  }
  SUBCASE("torn tail is dropped") {
    std::ofstream(log, std::ios::app) << R"({"type": "report", "seq": 9, "rep)";
    s.reopen_store();
    CHECK(s.store->report_count() == 1);
    s.call("POST", "/v1/apps/analyze", record_json("case_study_clone"));
    s.reopen_store();
    CHECK(s.store->report_count() == 2);
  }
  SUBCASE("corruption before the tail is fatal") {
    {
      std::ofstream out(log, std::ios::app);
      out << "garbage\n";
    }
    s.call("POST", "/v1/apps/analyze", record_json("case_study_clone"));
    CHECK_THROWS(ReportStore::open(s.dir / "store", *s.rt->index, *s.rt->embedder, s.rt->normalizer));
  }
}

TEST_CASE("batch jobs") {
  Stack s("batch");
  auto r = s.call("POST", "/v1/apps/analyze-batch",
                  json{{"records", {record_json("case_study_app"), record_json("benign_app")}}, {"parallelism", 2}},
                  {{"Idempotency-Key", "b1"}});
  REQUIRE(r.status == 202);
  check_def(r.body, "JobAccepted");
  const auto id = r.body.at("job_id").get<std::string>();
  CHECK(s.call("POST", "/v1/apps/analyze-batch", json{{"records", json::array()}}, {{"Idempotency-Key", "b1"}})
            .body.at("job_id") == id);
  s.svc->drain_jobs();
  r = s.call("GET", "/v1/jobs/" + id);
  REQUIRE(r.status == 200);
  check_def(r.body, "Job");
  CHECK(r.body.at("status") == "done");
  CHECK(r.body.at("summary").at("flagged") == 1);
  CHECK(r.body.at("outcomes").at(0).at("report_id") == "R000001");
  CHECK(s.call("GET", "/v1/jobs/J999999").status == 404);
  CHECK(s.call("POST", "/v1/apps/analyze-batch", json{{"corpus_path", "missing.jsonl"}}).status == 404);
  CHECK(s.call("POST", "/v1/apps/analyze-batch", json::object()).status == 400);
}

TEST_CASE("runtime config rejects unknown keys") {
  CHECK_THROWS_WITH(RuntimeConfig::from_json(json{{"portt", 1}}), doctest::Contains("portt"));
  const auto c = RuntimeConfig::from_json(json{{"port", 9000}, {"gate", "tree_only"}});
  CHECK(c.port == 9000);
  CHECK(c.gate == pipeline::GateMode::TreeOnly);
  CHECK(RuntimeConfig::from_json(c.to_json()).to_json() == c.to_json());
}
