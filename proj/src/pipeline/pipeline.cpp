#include "apprisk/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <thread>

namespace apprisk::pipeline {

std::string_view to_string(ValidationPolicy p) { return p == ValidationPolicy::Strict ? "strict" : "advisory"; }

ValidationPolicy validation_policy_from_string(std::string_view s) {
  if (s == "strict") return ValidationPolicy::Strict;
  if (s == "advisory") return ValidationPolicy::Advisory;
  throw Error("unknown validation policy '" + std::string(s) + "'");
}

std::string_view to_string(GateMode g) {
  switch (g) {
    case GateMode::None: return "none";
    case GateMode::TreeOnly: return "tree_only";
    case GateMode::HistoryOnly: return "history_only";
    case GateMode::Both: return "both";
  }
  return "both";
}

GateMode gate_mode_from_string(std::string_view s) {
  if (s == "none") return GateMode::None;
  if (s == "tree_only") return GateMode::TreeOnly;
  if (s == "history_only") return GateMode::HistoryOnly;
  if (s == "both") return GateMode::Both;
  throw Error("unknown gate mode '" + std::string(s) + "'");
}

std::string_view to_string(ValidationMode m) {
  switch (m) {
    case ValidationMode::Full: return "full";
    case ValidationMode::RuleOnlyDegraded: return "rule_only_degraded";
    case ValidationMode::Skipped: return "skipped";
  }
  return "full";
}

std::string_view to_string(OutcomeStatus s) {
  switch (s) {
    case OutcomeStatus::Clean: return "clean";
    case OutcomeStatus::Flagged: return "flagged";
    case OutcomeStatus::Error: return "error";
  }
  return "error";
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::string iso_date(std::int64_t epoch) {
  const std::time_t t = static_cast<std::time_t>(epoch);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
  return buf;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : sep) + i;
  return out;
}

std::string group_display(const FeatureGroupId& g) { return FeatureGroupCatalog::builtin().display_name(g); }

std::string snippet_text(const tree::CandidateRisk& c) {
  std::vector<std::string> parts;
  for (const auto& s : c.snippets) parts.push_back(s.summary);
  return join(parts, "\n");
}

std::vector<std::string> indicators_of(const tree::CandidateRisk& c, const retrieval::IndicatorNormalizer& n) {
  std::vector<std::string> all;
  for (const auto& s : c.snippets) all.insert(all.end(), s.indicators.begin(), s.indicators.end());
  return n.normalize_all(all);
}

const retrieval::IndicatorNormalizer& normalizer_of(const Engine& e) {
  static const retrieval::IndicatorNormalizer kDefault = retrieval::IndicatorNormalizer::defaults();
  return e.normalizer ? *e.normalizer : kDefault;
}

Precedent to_precedent(const retrieval::PatternMatch& m) {
  return Precedent{m.item->app_id, m.item->app_name, m.item->risk_category, m.shared, round6(m.similarity)};
}

}  // namespace

json outcome_to_json(const AnalysisOutcome& o) {
  json cats = json::array();
  for (auto c : o.categories) cats.push_back(c);
  json groups = json::array();
  for (const auto& g : o.degraded_groups) groups.push_back(g);
  return json{{"app_id", o.app_id},
              {"status", to_string(o.status)},
              {"categories", cats},
              {"detail", o.detail},
              {"degraded_groups", groups},
              {"report", o.report},
              {"usage", {{"identification", o.identification}, {"evidence_generation", o.evidence_generation}}},
              {"index_version", o.index_version}};
}

std::vector<tree::CandidateRisk> ungated_candidates(const tree::RiskTree& tree,
                                                    std::span<const EvidenceSnippet> snippets) {
  std::vector<tree::CandidateRisk> out;
  for (const auto& root : tree.roots) {
    tree::CandidateRisk c;
    c.category = root.category;
    c.satisfied_rule = "ungated";
    for (const auto& s : snippets) {
      if (root.has_group(s.group)) c.snippets.push_back(s);
    }
    if (c.snippets.empty()) continue;
    std::sort(c.snippets.begin(), c.snippets.end(), snippet_less);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ValidatedRisk> validate_with_history(const std::vector<tree::CandidateRisk>& candidates,
                                                 const retrieval::CaseIndex::Snapshot& snapshot,
                                                 const Engine& engine, const std::string& app_id,
                                                 llm::UsageLedger* usage) {
  const auto& normalizer = normalizer_of(engine);
  std::vector<ValidatedRisk> out;
  for (const auto& c : candidates) {
    ValidatedRisk v;
    v.candidate = c;
    retrieval::PatternTarget target{app_id, indicators_of(c, normalizer)};

    std::vector<retrieval::ScoredCase> nearest;
    bool retrieval_ok = true;
    try {
      if (!engine.embedder) throw Error("no embedder configured");
      const auto q = retrieval::embed_text(*engine.embedder, snippet_text(c));
      nearest = retrieval::query_top_k(snapshot, q, engine.top_k, c.category);
    } catch (const std::exception&) {
      retrieval_ok = false;
    }

    if (!retrieval_ok) {
      // No embedding: apply the indicator rule to the whole category.
      std::vector<retrieval::ScoredCase> all;
      for (const auto& item : snapshot.cases) {
        if (item->risk_category == c.category) all.push_back({item, 0.0});
      }
      std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.item->app_id < b.item->app_id; });
      for (const auto& m : retrieval::rule_based_matches(target, all, normalizer)) v.precedents.push_back(to_precedent(m));
      v.mode = ValidationMode::RuleOnlyDegraded;
    } else if (!nearest.empty()) {
      retrieval::PatternResult r;
      if (engine.gateway && engine.prompts && engine.prompts->contains("similar_pattern")) {
        r = retrieval::match_similar_pattern(target, nearest, *engine.gateway, engine.prompts->get("similar_pattern"),
                                             normalizer, {llm::Phase::Identification, app_id, usage},
                                             engine.temperature);
      } else {
        r.matches = retrieval::rule_based_matches(target, nearest, normalizer);
        r.degraded = true;
      }
      for (const auto& m : r.matches) v.precedents.push_back(to_precedent(m));
      v.mode = r.degraded ? ValidationMode::RuleOnlyDegraded : ValidationMode::Full;
    }

    if (v.precedents.empty() && engine.policy == ValidationPolicy::Strict) continue;
    out.push_back(std::move(v));
  }
  return out;
}

json generate_structured_report(const std::vector<ValidatedRisk>& risks, const AppRecord& app,
                                const ReportContext& context) {
  if (risks.empty()) throw Error("report requested without risks");

  // Evidence chain: distinct snippets across all risks, canonical order.
  std::vector<EvidenceSnippet> chain;
  for (const auto& r : risks) {
    for (const auto& s : r.candidate.snippets) {
      if (std::find(chain.begin(), chain.end(), s) == chain.end()) chain.push_back(s);
    }
  }
  std::sort(chain.begin(), chain.end(), snippet_less);

  json evidence = json::array();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& s = chain[i];
    json cats = json::array();
    std::vector<std::string> cat_names;
    std::vector<std::string> rules;
    for (const auto& r : risks) {
      if (std::find(r.candidate.snippets.begin(), r.candidate.snippets.end(), s) != r.candidate.snippets.end()) {
        cats.push_back(r.candidate.category);
        cat_names.push_back("[" + std::string(display_name(r.candidate.category)) + "]");
        rules.push_back(r.candidate.satisfied_rule);
      }
    }
    json refs = json::array();
    for (const auto& r : s.raw_refs) refs.push_back(r);
    const std::string note = group_display(s.group) + " evidence (" + join(s.indicators, ", ") + ") from " +
                             (s.producer == Producer::Agent ? "an agent" : "a statistical check") +
                             " supports " + join(cat_names, ", ") + " via rule " + join(rules, ", ") + ".";
    evidence.push_back({{"evidence_id", "E" + std::to_string(i + 1)},
                        {"group", s.group},
                        {"group_display", group_display(s.group)},
                        {"dimension", s.dimension},
                        {"summary", s.summary},
                        {"raw_refs", refs},
                        {"indicators", s.indicators},
                        {"producer", to_string(s.producer)},
                        {"categories", cats},
                        {"reasoning_note", note}});
  }

  json summary = json::array();
  json risk_list = json::array();
  json similar = json::array();
  for (const auto& r : risks) {
    summary.push_back(r.candidate.category);
    json groups = json::array();
    for (const auto& g : tree::groups_of(r.candidate.snippets)) groups.push_back(g);
    json ids = json::array();
    for (const auto& p : r.precedents) {
      ids.push_back(p.app_id);
      similar.push_back({{"app_id", p.app_id},
                         {"app_name", p.app_name},
                         {"category", p.category},
                         {"shared_indicators", p.shared_indicators},
                         {"similarity", p.similarity}});
    }
    risk_list.push_back({{"category", r.candidate.category},
                         {"display_name", display_name(r.candidate.category)},
                         {"satisfied_rule", r.candidate.satisfied_rule},
                         {"validation_mode", to_string(r.mode)},
                         {"evidence_groups", groups},
                         {"precedent_ids", ids}});
  }

  json degraded = json::array();
  for (const auto& g : context.degraded_groups) degraded.push_back(g);

  return json{{"schema_version", kReportSchemaVersion},
              {"app_overview",
               {{"app_id", app.app_id},
                {"app_name", app.app_name},
                {"developer", app.developer},
                {"declared_category", app.declared_category},
                {"analysis_window",
                 {{"start", app.collected_at.start},
                  {"end", app.collected_at.end},
                  {"start_date", iso_date(app.collected_at.start)},
                  {"end_date", iso_date(app.collected_at.end)}}}}},
              {"risk_summary", summary},
              {"risks", risk_list},
              {"evidence_chain", evidence},
              {"similar_delisted", similar},
              {"narrative", ""},
              {"narrative_source", "template_fallback"},
              {"integrity", {{"status", degraded.empty() ? "complete" : "degraded"}, {"degraded_groups", degraded}}},
              {"usage", {{"identification", llm::UsageStats{}}, {"evidence_generation", llm::UsageStats{}}}},
              {"provenance",
               {{"tree_version", context.tree_version},
                {"index_version", context.index_version},
                {"policy", to_string(context.policy)},
                {"gate", to_string(context.gate)}}}};
}

std::string template_narrative(const json& report) {
  const auto& overview = report.at("app_overview");
  std::string text = overview.at("app_name").get<std::string>() + " (" + overview.at("app_id").get<std::string>() +
                     ", declared category " + overview.at("declared_category").get<std::string>() + ").";
  for (const auto& risk : report.at("risks")) {
    const auto cat = risk.at("category").get<std::string>();
    std::vector<std::string> groups;
    for (const auto& g : risk.at("evidence_groups")) groups.push_back(group_display(g.get<FeatureGroupId>()));
    text += " [" + risk.at("display_name").get<std::string>() + "] is supported by " + join(groups, ", ") + ":";
    for (const auto& e : report.at("evidence_chain")) {
      bool mine = false;
      for (const auto& c : e.at("categories")) mine = mine || c.get<std::string>() == cat;
      if (mine) text += " " + e.at("summary").get<std::string>();
    }
    const auto& ids = risk.at("precedent_ids");
    if (!ids.empty()) {
      std::vector<std::string> names;
      for (const auto& id : ids) names.push_back(id.get<std::string>());
      text += " Similar delisted apps: " + join(names, ", ") + ".";
    }
  }
  return text;
}

std::vector<std::string> narrative_gaps(const json& report, const std::string& narrative) {
  std::vector<std::string> gaps;
  for (const auto& risk : report.at("risks")) {
    const auto name = risk.at("display_name").get<std::string>();
    if (narrative.find(name) == std::string::npos) gaps.push_back(name);
    bool any_group = false;
    std::vector<std::string> groups;
    for (const auto& g : risk.at("evidence_groups")) {
      const auto d = group_display(g.get<FeatureGroupId>());
      groups.push_back(d);
      any_group = any_group || narrative.find(d) != std::string::npos;
    }
    if (!any_group) gaps.push_back("evidence group for " + name + " (" + join(groups, " / ") + ")");
  }
  return gaps;
}

NarrativeResult generate_narrative(const json& report, const Engine& engine, llm::UsageLedger* usage) {
  const std::string fallback = template_narrative(report);
  if (!engine.gateway || !engine.prompts || !engine.prompts->contains("narrative")) {
    return {fallback, "template_fallback"};
  }
  std::string evidence;
  for (const auto& risk : report.at("risks")) {
    const auto cat = risk.at("category").get<std::string>();
    std::vector<std::string> groups;
    for (const auto& g : risk.at("evidence_groups")) groups.push_back(group_display(g.get<FeatureGroupId>()));
    evidence += "RISK " + risk.at("display_name").get<std::string>() + " :: " + join(groups, "; ") + "\n";
    for (const auto& e : report.at("evidence_chain")) {
      for (const auto& c : e.at("categories")) {
        if (c.get<std::string>() == cat) {
          evidence += "  - " + e.at("group_display").get<std::string>() + ": " + e.at("summary").get<std::string>() + "\n";
        }
      }
    }
  }
  if (!evidence.empty()) evidence.pop_back();

  const auto& overview = report.at("app_overview");
  const llm::CallTag tag{llm::Phase::EvidenceGeneration, overview.at("app_id").get<std::string>(), usage};
  llm::CompletionRequest req;
  req.temperature = engine.temperature;
  try {
    req.prompt = llm::render_prompt(engine.prompts->get("narrative"),
                                    {{"app_name", overview.at("app_name").get<std::string>()},
                                     {"declared_category", overview.at("declared_category").get<std::string>()},
                                     {"evidence", evidence}});
    const auto first = engine.gateway->complete(req, tag);
    auto gaps = narrative_gaps(report, first.text);
    if (gaps.empty()) return {first.text, "llm"};

    req.prompt += "\n\nYour previous summary did not mention: " + join(gaps, "; ") +
                  ". Rewrite it so that every listed risk and at least one of its evidence groups is named.";
    const auto second = engine.gateway->complete(req, tag);
    if (narrative_gaps(report, second.text).empty()) return {second.text, "llm_repaired"};
  } catch (const std::exception&) {
  }
  return {fallback, "template_fallback"};
}

void check_report_invariants(const json& report, const AppRecord& app, bool require_two_groups) {
  std::map<std::string, std::set<std::string>> groups_per_cat;
  for (const auto& e : report.at("evidence_chain")) {
    for (const auto& r : e.at("raw_refs")) {
      const auto ref = r.get<RawRef>();
      bool found = ref.app_id == app.app_id;
      if (found) {
        found = false;
        for (const auto& [g, values] : app.features) {
          for (const auto& v : values) found = found || (v.dimension == ref.dimension && v.source == ref.source);
        }
      }
      if (!found) throw Error("report invariant: unresolved raw_ref " + r.dump());
    }
    for (const auto& c : e.at("categories")) groups_per_cat[c.get<std::string>()].insert(e.at("group").get<std::string>());
  }
  for (const auto& c : report.at("risk_summary")) {
    const auto n = groups_per_cat[c.get<std::string>()].size();
    if (n == 0 || (require_two_groups && n < 2)) {
      throw Error("report invariant: " + c.get<std::string>() + " backed by " + std::to_string(n) + " group(s)");
    }
  }
  const auto narrative = report.value("narrative", std::string{});
  if (!narrative.empty() && !narrative_gaps(report, narrative).empty()) {
    throw Error("report invariant: narrative misses " + narrative_gaps(report, narrative).front());
  }
}

AnalysisOutcome run_analysis(const AppRecord& app, const Engine& engine) {
  AnalysisOutcome out;
  out.app_id = app.app_id;
  if (!engine.tree || !engine.index || !engine.registry) {
    out.status = OutcomeStatus::Error;
    out.detail = "engine is missing a tree, index or agent registry";
    return out;
  }

  auto t0 = Clock::now();
  if (auto issues = validate_app_record(app); !issues.empty()) {
    out.status = OutcomeStatus::Error;
    out.detail = "invalid record: " + issues.front().field + ": " + issues.front().message;
    out.timings.ingest = since(t0);
    return out;
  }
  const auto snapshot = engine.index->snapshot();
  out.index_version = snapshot->version;
  out.timings.ingest = since(t0);

  llm::UsageLedger usage;
  t0 = Clock::now();
  agents::AgentContext actx;
  actx.gateway = engine.gateway;
  actx.prompts = engine.prompts;
  actx.baselines = engine.baselines;
  actx.registry = engine.registry;
  actx.normalizer = engine.normalizer;
  actx.usage = &usage;
  for (const auto& c : snapshot->cases) actx.delisted_ids.insert(c->app_id);
  const auto evidence = agents::run_all_agents(app, actx);
  out.degraded_groups = evidence.degraded_groups;
  out.timings.agents = since(t0);

  t0 = Clock::now();
  const bool use_tree = engine.gate == GateMode::TreeOnly || engine.gate == GateMode::Both;
  const bool use_history = engine.gate == GateMode::HistoryOnly || engine.gate == GateMode::Both;
  const auto candidates =
      use_tree ? tree::evaluate(*engine.tree, evidence.snippets) : ungated_candidates(*engine.tree, evidence.snippets);
  out.timings.tree = since(t0);

  t0 = Clock::now();
  std::vector<ValidatedRisk> risks;
  if (use_history) {
    risks = validate_with_history(candidates, *snapshot, engine, app.app_id, &usage);
  } else {
    for (const auto& c : candidates) risks.push_back({c, {}, ValidationMode::Skipped});
  }
  out.timings.history = since(t0);

  auto finish_usage = [&] {
    out.identification = usage.totals(llm::Phase::Identification).total;
    out.evidence_generation = usage.totals(llm::Phase::EvidenceGeneration).total;
  };
  if (risks.empty()) {
    finish_usage();
    return out;
  }

  t0 = Clock::now();
  ReportContext rctx{evidence.degraded_groups, engine.tree->version, snapshot->version, engine.policy, engine.gate};
  json report = generate_structured_report(risks, app, rctx);
  out.timings.report = since(t0);

  t0 = Clock::now();
  const auto narrative = generate_narrative(report, engine, &usage);
  report["narrative"] = narrative.text;
  report["narrative_source"] = narrative.source;
  finish_usage();
  report["usage"] = {{"identification", out.identification}, {"evidence_generation", out.evidence_generation}};
  out.timings.narrative = since(t0);

  try {
    check_report_invariants(report, app, use_tree);
  } catch (const std::exception& e) {
    out.status = OutcomeStatus::Error;
    out.detail = e.what();
    return out;
  }
  out.status = OutcomeStatus::Flagged;
  for (const auto& r : risks) out.categories.push_back(r.candidate.category);
  out.report = std::move(report);
  return out;
}

void to_json(json& j, const BatchSummary& s) {
  j = json{{"total", s.total},
           {"clean", s.clean},
           {"flagged", s.flagged},
           {"errors", s.errors},
           {"usage", s.usage},
           {"wall_seconds", s.wall_seconds},
           {"parallelism", s.parallelism}};
}

BatchResult run_batch(const std::vector<AppRecord>& apps, const Engine& engine, std::size_t parallelism) {
  if (parallelism == 0) throw Error("parallelism must be at least 1");
  const auto t0 = Clock::now();
  BatchResult result;
  result.outcomes.resize(apps.size());

  std::map<std::string, std::size_t> first_seen;
  std::vector<bool> duplicate(apps.size(), false);
  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (!first_seen.emplace(apps[i].app_id, i).second) duplicate[i] = true;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < apps.size(); i = next++) {
      if (duplicate[i]) {
        result.outcomes[i].app_id = apps[i].app_id;
        result.outcomes[i].status = OutcomeStatus::Error;
        result.outcomes[i].detail = "duplicate app_id in batch";
        continue;
      }
      try {
        result.outcomes[i] = run_analysis(apps[i], engine);
      } catch (const std::exception& e) {
        result.outcomes[i] = AnalysisOutcome{};
        result.outcomes[i].app_id = apps[i].app_id;
        result.outcomes[i].status = OutcomeStatus::Error;
        result.outcomes[i].detail = e.what();
      }
    }
  };
  const std::size_t n = std::min(parallelism, std::max<std::size_t>(apps.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  llm::UsageLedger ledger;
  for (const auto& o : result.outcomes) {
    ++result.summary.total;
    if (o.status == OutcomeStatus::Clean) ++result.summary.clean;
    if (o.status == OutcomeStatus::Flagged) ++result.summary.flagged;
    if (o.status == OutcomeStatus::Error) ++result.summary.errors;
    if (o.identification.total_tokens() > 0 || o.identification.latency > 0) {
      ledger.record(o.identification, llm::Phase::Identification, o.app_id);
    }
    if (o.evidence_generation.total_tokens() > 0 || o.evidence_generation.latency > 0) {
      ledger.record(o.evidence_generation, llm::Phase::EvidenceGeneration, o.app_id);
    }
  }
  result.summary.usage = ledger.summary();
  result.summary.parallelism = parallelism;
  result.summary.wall_seconds = since(t0);
  return result;
}

LabelSet load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open labels file " + path);
  LabelSet labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    auto& set = labels[j.at("app_id").get<std::string>()];
    for (const auto& c : j.at("labels")) set.insert(c.get<RiskCategory>());
  }
  return labels;
}

void to_json(json& j, const LabelScore& s) {
  j = json{{"false_positives", s.false_positives},
           {"true_positives", s.true_positives},
           {"planted", s.planted},
           {"recall", s.recall()}};
}

LabelScore score_outcomes(const std::vector<AnalysisOutcome>& outcomes, const LabelSet& labels) {
  LabelScore score;
  for (const auto& [_, cats] : labels) score.planted += cats.size();
  for (const auto& o : outcomes) {
    auto it = labels.find(o.app_id);
    for (auto c : o.categories) {
      if (it != labels.end() && it->second.count(c)) {
        ++score.true_positives;
      } else {
        ++score.false_positives;
      }
    }
  }
  return score;
}

}  // namespace apprisk::pipeline
