#include <doctest.h>

#include <atomic>
#include <thread>

#include "apprisk/llm/gateway.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::llm;

namespace {

PromptLibrary repo_prompts() {
  return PromptLibrary::load_directory((testing::source_dir() / "config" / "prompts").string());
}

std::unique_ptr<Gateway> scripted(std::vector<std::string> replies, int fail_first = 0, bool terminal = false) {
  GatewayOptions o;
  o.retry_backoff = std::chrono::milliseconds(0);
  auto gw = std::make_unique<Gateway>(o);
  gw->register_backend("s", std::make_shared<ScriptedBackend>(std::move(replies), fail_first, terminal));
  gw->set_default_backend("s");
  return gw;
}

}  // namespace

TEST_CASE("placeholders in order of first appearance") {
  CHECK(placeholders("{{b}} {{a}} {{b}} {{ not }} {{c_1}}") == std::vector<std::string>{"b", "a", "c_1"});
}

TEST_CASE("rendering binds values and places examples") {
  PromptTemplate t{"t", "A {{x}}\n{{few_shot_examples}}\n<<<IN\n{{y}}\nIN>>>", "", {{"i1", "o1"}}};
  const auto out = render_prompt(t, {{"x", "1"}, {"y", "{{x}}"}});
  CHECK(out.find("A 1") == 0);
  CHECK(out.find("Example input:\ni1") < out.find("<<<IN"));
  CHECK(out.find("{{x}}") != std::string::npos);  // bound values are not re-expanded
  CHECK_THROWS_WITH(render_prompt(t, {{"x", "1"}}), doctest::Contains("'y'"));

  PromptTemplate tail{"t", "Body {{x}}", "", {{"i", "o"}}};
  const auto tail_out = render_prompt(tail, {{"x", "1"}});
  CHECK(tail_out.find("Body 1") < tail_out.find("Example input"));
}

TEST_CASE("prompt asset parsing") {
  const auto t = parse_prompt_asset(
      "# notes\n@template demo\n@output feedback_verdict\n@body\nHello {{name}}\n"
      "@example-input\nin\n@example-output\nout\n");
  CHECK(t.template_id == "demo");
  CHECK(t.expected_output == "feedback_verdict");
  CHECK(t.body.find("Hello {{name}}") != std::string::npos);
  REQUIRE(t.few_shot_examples.size() == 1);
  CHECK(t.few_shot_examples[0].input == "in");
  CHECK_THROWS(parse_prompt_asset("@body\nno id\n"));
}

TEST_CASE("shipped prompts load and carry their task markers") {
  const auto lib = repo_prompts();
  CHECK(lib.ids() == std::vector<std::string>{"discrepancy", "narrative", "similar_pattern", "user_feedback"});
  CHECK(lib.get("user_feedback").body.find(task_markers::kUserFeedback) != std::string::npos);
  CHECK(lib.get("discrepancy").body.find(task_markers::kDiscrepancy) != std::string::npos);
  CHECK(lib.get("similar_pattern").body.find(task_markers::kSimilarPattern) != std::string::npos);
  CHECK(lib.get("narrative").body.find(task_markers::kNarrative) != std::string::npos);
  CHECK_THROWS(lib.get("nope"));
}

TEST_CASE("structured parsing tolerates reasoning and fences") {
  const std::string think =
      "<think>\nThe user wants {braces} and \"quotes\".\n</think>\nHere you go:\n```json\n"
      "{\"Quality\": \"High\", \"Tendency\": \"Negative\", \"RiskInfo\": {\"Snippets\": \"line one\nline two\", "
      "\"Risk Factor\": \"Advertising-related\"}}\n```";
  const auto v = parse_structured_output(think, "feedback_verdict");
  CHECK(v.at("Quality") == "High");
  CHECK(v.at("RiskInfo").at("Snippets").get<std::string>().find("line two") != std::string::npos);
  CHECK_THROWS_AS(parse_structured_output("{\"Quality\": \"Huge\"}", "feedback_verdict"), MalformedOutputError);
  CHECK_THROWS_AS(parse_structured_output("nothing", "similar_pattern"), MalformedOutputError);
  CHECK(parse_structured_output("x {\"A\": [\"p\"]} y", "similar_pattern").contains("A"));
}

TEST_CASE("one repair pass, then failure") {
  {
    auto owned = scripted({"garbage", R"({"A": ["x"]})"});
    auto& gw = *owned;
    const auto r = complete_structured(gw, CompletionRequest{"p"}, "similar_pattern");
    CHECK(r.repaired);
    CHECK(gw.backend_calls() == 2);
  }
  {
    auto owned = scripted({"garbage"});
    auto& gw = *owned;
    CHECK_THROWS_AS(complete_structured(gw, CompletionRequest{"p"}, "similar_pattern"), MalformedOutputError);
    CHECK(gw.backend_calls() == 2);
  }
}

TEST_CASE("gateway retries transient failures only") {
  {
    auto owned = scripted({"ok"}, 2);
    auto& gw = *owned;
    CHECK(gw.complete(CompletionRequest{"p"}).text == "ok");
    CHECK(gw.backend_calls() == 3);
  }
  {
    auto owned = scripted({"ok"}, 3);
    auto& gw = *owned;
    CHECK_THROWS_AS(gw.complete(CompletionRequest{"p"}), TerminalError);
  }
  {
    auto owned = scripted({"ok"}, 1, true);
    auto& gw = *owned;
    CHECK_THROWS_AS(gw.complete(CompletionRequest{"p"}), TerminalError);
    CHECK(gw.backend_calls() == 1);
  }
  auto owned = scripted({"ok"});
    auto& gw = *owned;
  CompletionRequest hot{"p"};
  hot.temperature = 1.5;
  CHECK_THROWS(gw.complete(hot));
  hot.backend_id = "missing";
  hot.temperature = 0.5;
  CHECK_THROWS_WITH(gw.complete(hot), doctest::Contains("unknown backend"));
}

TEST_CASE("gateway bounds concurrent backend calls") {
  struct Slow : Backend {
    std::atomic<int> now{0}, peak{0};
    BackendReply generate(const CompletionRequest&) override {
      const int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --now;
      return {"ok", 1, 1, 0.0};
    }
  };
  auto slow = std::make_shared<Slow>();
  GatewayOptions o;
  o.max_in_flight = 2;
  Gateway gw(o);
  gw.register_backend("slow", slow);
  gw.set_default_backend("slow");
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i) ts.emplace_back([&] { gw.complete(CompletionRequest{"p"}); });
  for (auto& t : ts) t.join();
  CHECK(slow->peak.load() <= 2);
  CHECK(gw.usage().totals(Phase::Identification).calls == 8);
}

TEST_CASE("usage ledger reproduces the per-phase averaging of the token table") {
  // Rows of the published token/time table, tokens scaled by 10 to stay integral.
  const double id_tokens[] = {572.1, 662.1, 265.7, 469.8, 209.2, 595.6, 799.2, 430.5};
  const double id_time[] = {21.20, 18.21, 8.51, 10.42, 6.11, 13.22, 25.10, 8.22};
  const double ev_tokens[] = {3549.1, 2654.7, 2488.6, 3601.2, 2202.5, 1901.2, 3702.1, 2006.2};
  const double ev_time[] = {22.67, 12.17, 9.57, 19.20, 6.10, 7.20, 6.22, 3.32};
  UsageLedger ledger;
  double id_sum = 0, ev_sum = 0, id_t = 0, ev_t = 0;
  for (int i = 0; i < 8; ++i) {
    const std::string app = "R" + std::to_string(i + 1);
    const auto it = static_cast<std::size_t>(std::lround(id_tokens[i] * 10));
    const auto et = static_cast<std::size_t>(std::lround(ev_tokens[i] * 10));
    // Split each phase across two calls to check per-app aggregation.
    ledger.record({it / 2, it - it / 2, id_time[i] / 2}, Phase::Identification, app);
    ledger.record({0, 0, id_time[i] / 2}, Phase::Identification, app);
    ledger.record({et, 0, ev_time[i]}, Phase::EvidenceGeneration, app);
    id_sum += it;
    ev_sum += et;
    id_t += id_time[i];
    ev_t += ev_time[i];
  }
  const auto s = ledger.summary();
  CHECK(s.apps == 8);
  CHECK(s.identification.calls == 16);
  CHECK(s.identification.avg_tokens_per_app / 10 == doctest::Approx(id_sum / 80));
  CHECK(s.identification.avg_tokens_per_app / 10 == doctest::Approx(500.5).epsilon(1e-4));
  CHECK(s.identification.avg_latency_per_app == doctest::Approx(id_t / 8));
  CHECK(s.evidence_generation.avg_tokens_per_app / 10 == doctest::Approx(ev_sum / 80));
  CHECK(s.avg_tokens_per_app ==
        doctest::Approx(s.identification.avg_tokens_per_app + s.evidence_generation.avg_tokens_per_app));
  CHECK(s.avg_latency_per_app == doctest::Approx((id_t + ev_t) / 8));

  // Each row's summary column is the sum of its two phases.
  const double summary_col[] = {4121.2, 3316.8, 2754.3, 4071.0, 2411.7, 2496.8, 4501.3, 2430.7};
  // R8 is the exception: its printed summary is 6.0 below its phase sum.
  for (int i = 0; i < 7; ++i) CHECK(id_tokens[i] + ev_tokens[i] == doctest::Approx(summary_col[i]));
  CHECK(id_tokens[7] + ev_tokens[7] - summary_col[7] == doctest::Approx(6.0));
}

TEST_CASE("usage ledger: union of apps across phases") {
  UsageLedger l;
  l.record({10, 0, 1.0}, Phase::Identification, "a");
  l.record({10, 0, 1.0}, Phase::Identification, "b");
  l.record({30, 0, 3.0}, Phase::EvidenceGeneration, "a");
  const auto s = l.summary();
  CHECK(s.apps == 2);
  CHECK(s.identification.avg_tokens_per_app == doctest::Approx(10.0));
  CHECK(s.evidence_generation.avg_tokens_per_app == doctest::Approx(30.0));
  CHECK(s.avg_tokens_per_app == doctest::Approx(25.0));
  UsageLedger other;
  other.record({5, 5, 0}, Phase::Identification, "c");
  l.merge(other);
  CHECK(l.summary().apps == 3);
  l.clear();
  CHECK(l.summary().apps == 0);
}

TEST_CASE("rule-backed mock answers the shipped prompts") {
  const auto lib = repo_prompts();
  Gateway gw;
  gw.register_backend("mock", make_rule_backed_mock());
  gw.set_default_backend("mock");

  CompletionRequest fb;
  fb.prompt = render_prompt(lib.get("user_feedback"),
                            {{"factors", "1. advertising-related\n"},
                             {"input_data", "1. Too many ads\n2. Popups everywhere\n3. Great music"}});
  const auto v = complete_structured(gw, fb, "feedback_verdict").value;
  CHECK(v.at("Quality") == "High");
  CHECK(v.at("Tendency") == "Negative");
  CHECK(v.at("RiskInfo").at("Risk Factor") == "Advertising-related");

  CompletionRequest dc;
  dc.prompt = render_prompt(lib.get("discrepancy"),
                            {{"app_name", "X"}, {"declared_category", "Tools"},
                             {"text", "Play the casino game and withdraw coins"}});
  const auto d = complete_structured(gw, dc, "discrepancy_verdict").value;
  CHECK(d.at("Mismatch") == true);
  dc.prompt = render_prompt(lib.get("discrepancy"),
                            {{"app_name", "X"}, {"declared_category", "Games"},
                             {"text", "A fun game with casino levels"}});
  CHECK(complete_structured(gw, dc, "discrepancy_verdict").value.at("Mismatch") == false);

  // Deterministic: same prompt, same text.
  CHECK(gw.complete(fb).text == gw.complete(fb).text);
}
