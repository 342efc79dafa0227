#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "apprisk/retrieval/retrieval.hpp"
#include "support.hpp"

using namespace apprisk;
using namespace apprisk::retrieval;

namespace {

DelistedCase make_case(const std::string& id, RiskCategory cat, std::vector<std::string> indicators,
                       const Embedder& e, const std::string& text = "") {
  DelistedCase c;
  c.app_id = id;
  c.risk_category = cat;
  c.indicators = std::move(indicators);
  std::sort(c.indicators.begin(), c.indicators.end());
  c.snippet_text = text.empty() ? id + " " + c.indicators.front() : text;
  c.embedding = embed_text(e, c.snippet_text);
  return c;
}

llm::PromptTemplate similar_prompt() {
  return llm::PromptLibrary::load_directory((testing::source_dir() / "config" / "prompts").string())
      .get("similar_pattern");
}

}  // namespace

TEST_CASE("normalizer: casing, spacing and aliases") {
  auto n = IndicatorNormalizer::defaults();
  CHECK(n.normalize("  Malicious Call Callee ") == "malicious-callee");
  CHECK(n.normalize("Ad  Pop-ups") == "ad-pop-ups");
  n.add_alias("popups", "ad-pop-ups");
  n.add_alias("pop", "popups");
  CHECK(n.normalize("POP") == "ad-pop-ups");
  CHECK(n.normalize(n.normalize("POP")) == n.normalize("POP"));
  CHECK_THROWS(n.add_alias("ad-pop-ups", "pop"));
  CHECK(n.normalize_all({"b", "a", "B"}) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("bundled alias table loads") {
  const auto n = IndicatorNormalizer::load((testing::source_dir() / "config" / "aliases.json").string());
  CHECK(n.normalize("unrelated-package-launch") == "malicious-callee");
  CHECK(n.normalize("advertising") == "advertising-related");
}

TEST_CASE("shared indicators is a sorted set intersection") {
  CHECK(shared_indicators({"c", "a", "b"}, {"b", "c", "d", "c"}) == std::vector<std::string>{"b", "c"});
  CHECK(shared_indicators({}, {"a"}).empty());
}

TEST_CASE("hashing embedder is deterministic") {
  HashingEmbedder e(64);
  const auto a = embed_text(e, "pop-ups every minute");
  CHECK(a == embed_text(e, "pop-ups every minute"));
  CHECK(std::any_of(a.values.begin(), a.values.end(), [](double v) { return v != 0.0; }));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, e.embed("pop-ups every hour")) > cosine_similarity(a, e.embed("wallet refund")));
  CHECK_THROWS(embed_text(e, ""));
  CHECK_THROWS(cosine_similarity(a, HashingEmbedder(32).embed("x")));
}

TEST_CASE("index append rules") {
  HashingEmbedder e(32);
  CaseIndex idx(32);
  CHECK(idx.append(make_case("A", RiskCategory::AdPopups, {"ad-pop-ups", "ad-sdk-implant"}, e)) == 1);
  CHECK(idx.contains("A", RiskCategory::AdPopups));
  CHECK_THROWS_WITH(idx.append(make_case("A", RiskCategory::AdPopups, {"ad-pop-ups"}, e)),
                    doctest::Contains("already indexed"));
  CHECK(idx.append(make_case("A", RiskCategory::Malware, {"suspicious-domains"}, e)) == 2);
  auto bad = make_case("B", RiskCategory::AdPopups, {"Not Canonical"}, e);
  CHECK_THROWS(idx.append(bad));
  auto wrong_dim = make_case("C", RiskCategory::AdPopups, {"x"}, HashingEmbedder(16));
  CHECK_THROWS_WITH(idx.check(wrong_dim), doctest::Contains("dimension"));
  CHECK(idx.version() == 2);

  const auto snap = idx.snapshot();
  idx.append(make_case("D", RiskCategory::AdPopups, {"x"}, e));
  CHECK(snap->cases.size() == 2);
  CHECK(idx.snapshot()->cases.size() == 3);
}

TEST_CASE("persisted index survives reopen, torn tails and compaction") {
  HashingEmbedder e(32);
  const auto dir = testing::scratch_dir("index");
  {
    auto idx = CaseIndex::open(dir, 32);
    idx->append(make_case("A", RiskCategory::AdPopups, {"a", "b"}, e));
    idx->append(make_case("B", RiskCategory::Retention, {"c", "d"}, e));
  }
  {
    std::ofstream(CaseIndex::open(dir, 32)->log_path(), std::ios::app) << "{\"app_id\": \"torn";
  }
  {
    auto idx = CaseIndex::open(dir, 32);
    CHECK(idx->size() == 2);
    CHECK(idx->version() == 2);
    idx->append(make_case("C", RiskCategory::Malware, {"e", "f"}, e));
    idx->compact();
  }
  auto idx = CaseIndex::open(dir, 32);
  CHECK(idx->size() == 3);
  CHECK(idx->contains("C", RiskCategory::Malware));
  const auto stats = idx->stats();
  CHECK(stats.total == 3);
  CHECK(stats.per_category.at(RiskCategory::Retention) == 1);
  CHECK_THROWS(CaseIndex::open(dir, 64));
}

TEST_CASE("top-k matches brute force, ties included") {
  HashingEmbedder e(16);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> word(0, 7);
  CaseIndex idx(16);
  for (int i = 0; i < 200; ++i) {
    // Few distinct texts so identical embeddings (exact ties) are common.
    const std::string text = "w" + std::to_string(word(rng)) + " w" + std::to_string(word(rng));
    idx.append(make_case("A" + std::to_string(1000 - i), kAllRiskCategories[i % 8], {"x", "y"}, e, text));
  }
  const auto snap = idx.snapshot();
  for (int q = 0; q < 20; ++q) {
    const auto query = e.embed("w" + std::to_string(word(rng)) + " w" + std::to_string(word(rng)));
    for (std::size_t k : {1u, 3u, 10u}) {
      for (std::optional<RiskCategory> cat : {std::optional<RiskCategory>{}, std::optional{RiskCategory::Malware}}) {
        std::vector<std::pair<double, const DelistedCase*>> all;
        for (const auto& c : snap->cases) {
          if (!cat || c->risk_category == *cat) all.push_back({cosine_similarity(query, c->embedding), c.get()});
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          if (a.second->app_id != b.second->app_id) return a.second->app_id < b.second->app_id;
          return a.second->risk_category < b.second->risk_category;
        });
        const auto got = query_top_k(*snap, query, k, cat);
        REQUIRE(got.size() == std::min(k, all.size()));
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].item.get() == all[i].second);
      }
    }
  }
}

TEST_CASE("history file loads and normalizes") {
  HashingEmbedder e(256);
  const auto cases = load_cases_jsonl((testing::source_dir() / "data/history/delisted_cases.jsonl").string(), e,
                                      IndicatorNormalizer::defaults());
  CHECK(cases.size() == 52);
  for (const auto& c : cases) {
    CHECK(validate_case(c, 256).empty());
    CHECK(std::is_sorted(c.groups.begin(), c.groups.end()));
  }
}

TEST_CASE("rule matches need two shared indicators") {
  HashingEmbedder e(32);
  auto a = std::make_shared<const DelistedCase>(make_case("A", RiskCategory::AdPopups, {"p", "q", "r"}, e));
  auto b = std::make_shared<const DelistedCase>(make_case("B", RiskCategory::AdPopups, {"p", "z"}, e));
  const std::vector<ScoredCase> cands{{a, 0.9}, {b, 0.8}};
  const auto m = rule_based_matches({"T", {"P", "q"}}, cands, IndicatorNormalizer::defaults());
  REQUIRE(m.size() == 1);
  CHECK(m[0].item->app_id == "A");
  CHECK(m[0].shared == std::vector<std::string>{"p", "q"});
}

TEST_CASE("similar-pattern: model claims are filtered by the index") {
  HashingEmbedder e(32);
  auto a = std::make_shared<const DelistedCase>(make_case("A", RiskCategory::AdPopups, {"p", "q"}, e));
  auto b = std::make_shared<const DelistedCase>(make_case("B", RiskCategory::AdPopups, {"p", "z"}, e));
  const std::vector<ScoredCase> cands{{a, 0.9}, {b, 0.8}};
  const auto prompt = similar_prompt();
  const auto norm = IndicatorNormalizer::defaults();

  SUBCASE("lying about indicators does not help") {
    llm::Gateway gw;
    gw.register_backend("s", std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{
                                 R"({"A": ["p", "q"], "B": ["p", "q"], "GHOST": ["p", "q"]})"}));
    gw.set_default_backend("s");
    const auto r = match_similar_pattern({"T", {"p", "q"}}, cands, gw, prompt, norm);
    CHECK_FALSE(r.degraded);
    CHECK(r.claimed == 3);
    CHECK(r.rejected == 2);
    REQUIRE(r.matches.size() == 1);
    CHECK(r.matches[0].item->app_id == "A");
  }
  SUBCASE("malformed twice falls back to the rule") {
    auto backend = std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{"no json here"});
    llm::Gateway gw;
    gw.register_backend("s", backend);
    gw.set_default_backend("s");
    const auto r = match_similar_pattern({"T", {"p", "q"}}, cands, gw, prompt, norm);
    CHECK(r.degraded);
    CHECK(backend->calls() == 2);
    REQUIRE(r.matches.size() == 1);
    CHECK(r.matches[0].item->app_id == "A");
  }
  SUBCASE("malformed once is repaired") {
    llm::Gateway gw;
    gw.register_backend("s", std::make_shared<llm::ScriptedBackend>(
                                 std::vector<std::string>{"sorry", "```json\n{\"A\": [\"p\"]}\n```"}));
    gw.set_default_backend("s");
    const auto r = match_similar_pattern({"T", {"p", "q"}}, cands, gw, prompt, norm);
    CHECK_FALSE(r.degraded);
    CHECK(r.matches.size() == 1);
  }
  SUBCASE("empty answer keeps nothing") {
    llm::Gateway gw;
    gw.register_backend("s", std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{"{}"}));
    gw.set_default_backend("s");
    CHECK(match_similar_pattern({"T", {"p", "q"}}, cands, gw, prompt, norm).matches.empty());
  }
}
