#include "apprisk/agents/agents.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace apprisk::agents {

std::string_view to_string(AgentMode m) {
  switch (m) {
    case AgentMode::Llm: return "llm";
    case AgentMode::Statistical: return "statistical";
    case AgentMode::Hybrid: return "hybrid";
  }
  return "statistical";
}

AgentMode agent_mode_from_string(std::string_view s) {
  if (s == "llm") return AgentMode::Llm;
  if (s == "statistical") return AgentMode::Statistical;
  if (s == "hybrid") return AgentMode::Hybrid;
  throw Error("unknown agent mode '" + std::string(s) + "'");
}

std::vector<std::string> default_risk_factors() {
  return {"advertising-related", "content-anomaly", "functional-issue", "privacy", "payment-fraud", "other"};
}

std::vector<std::string> validate_spec(const AgentSpec& spec) {
  static const std::set<std::string> known = {
      analyzers::kUserFeedback, analyzers::kDiscrepancy, analyzers::kExecutionPatterns,
      analyzers::kAppDistribution, analyzers::kAntiVirus, analyzers::kThreshold, analyzers::kTextFlags};
  std::vector<std::string> issues;
  if (spec.group.empty()) issues.push_back("group empty");
  if (!known.count(spec.analyzer)) issues.push_back("unknown analyzer '" + spec.analyzer + "'");
  const bool needs_template = spec.mode == AgentMode::Llm || spec.mode == AgentMode::Hybrid;
  const bool needs_baselines = spec.mode == AgentMode::Statistical || spec.mode == AgentMode::Hybrid;
  if (needs_template && !spec.template_id) issues.push_back("llm mode without template_id");
  if (needs_baselines && spec.baselines.empty()) issues.push_back("statistical mode without baselines");
  if (spec.temperature && (*spec.temperature < 0.0 || *spec.temperature > 1.0)) {
    issues.push_back("temperature outside [0, 1]");
  }
  return issues;
}

void AgentRegistry::add(AgentSpec spec) {
  if (auto issues = validate_spec(spec); !issues.empty()) {
    throw Error("agent spec for " + spec.group.name() + ": " + issues.front());
  }
  if (find(spec.group)) throw Error("duplicate agent spec for group " + spec.group.name());
  specs_.push_back(std::move(spec));
}

const AgentSpec* AgentRegistry::find(const FeatureGroupId& group) const {
  for (const auto& s : specs_) {
    if (s.group == group) return &s;
  }
  return nullptr;
}

AgentRegistry AgentRegistry::from_json(const json& doc) {
  if (doc.value("schema_version", std::string{}) != "1") {
    throw Error("agent registry: unsupported schema_version");
  }
  AgentRegistry r;
  r.default_temperature = doc.value("default_temperature", llm::kDefaultTemperature);
  r.risk_factors = doc.value("risk_factors", default_risk_factors());
  r.sdk_allowlist = doc.value("sdk_allowlist", std::vector<std::string>{});
  for (const auto& id : doc.value("known_delisted_apps", std::vector<std::string>{})) {
    r.known_delisted_apps.insert(id);
  }
  if (auto it = doc.find("text_flags"); it != doc.end()) {
    for (const auto& [group, flags] : it->items()) {
      r.text_flags[FeatureGroupId{group}] = flags.get<std::map<std::string, std::string>>();
    }
  }
  for (const auto& a : doc.at("agents")) {
    AgentSpec s;
    s.group = a.at("group").get<FeatureGroupId>();
    s.mode = agent_mode_from_string(a.at("mode").get<std::string>());
    s.analyzer = a.at("analyzer").get<std::string>();
    if (a.contains("template_id")) s.template_id = a.at("template_id").get<std::string>();
    if (a.contains("output_schema")) s.output_schema = a.at("output_schema").get<std::string>();
    s.baselines = a.value("baselines", std::vector<std::string>{});
    if (a.contains("temperature")) s.temperature = a.at("temperature").get<double>();
    r.add(std::move(s));
  }
  return r;
}

AgentRegistry AgentRegistry::load(const std::string& path) { return from_json(load_json_file(path)); }

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

RawRef ref_of(const AppRecord& app, const FeatureValue& v) { return RawRef{app.app_id, v.dimension, v.source}; }

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : sep) + i;
  return out;
}

std::string normalize(const AgentContext& ctx, const std::string& raw) {
  return ctx.normalizer ? ctx.normalizer->normalize(raw) : retrieval::canonical_form(raw);
}

double temperature_for(const AgentSpec& spec, const AgentContext& ctx) {
  if (spec.temperature) return *spec.temperature;
  return ctx.registry ? ctx.registry->default_temperature : llm::kDefaultTemperature;
}

std::string numbered(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += std::to_string(i + 1) + ". \"" + lines[i] + "\"\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

const std::string& category_label(const AppRecord& app) {
  static const std::string kAny = "*";
  return app.declared_category.empty() ? kAny : app.declared_category;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',' || c == '\n' || c == ';') {
      auto t = trim(cur);
      if (!t.empty()) out.push_back(std::move(t));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

std::vector<std::string> feedback_comments(const AppRecord& app) {
  std::vector<std::string> out;
  const FeatureValue* v = app.find(groups::UserFeedback, "comments");
  if (!v || !v->text()) return out;
  std::istringstream in(*v->text());
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

AgentResult analyze_user_feedback(const std::vector<std::string>& comments, const AppRecord& app,
                                  const AgentSpec& spec, const AgentContext& ctx) {
  AgentResult result;
  std::vector<std::string> kept;
  for (const auto& c : comments) {
    auto t = trim(c);
    if (!t.empty()) kept.push_back(std::move(t));
  }
  if (kept.empty()) return result;
  if (!ctx.gateway || !ctx.prompts) {
    result.degraded = true;
    result.detail = "no gateway configured";
    return result;
  }
  const FeatureValue* source = app.find(groups::UserFeedback, "comments");
  const auto factors = ctx.registry ? ctx.registry->risk_factors : default_risk_factors();

  json verdict;
  try {
    const auto& tmpl = ctx.prompts->get(spec.template_id.value_or("user_feedback"));
    std::string factor_list;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      factor_list += std::to_string(i + 1) + ". " + factors[i] + "\n";
    }
    llm::CompletionRequest req;
    req.prompt = llm::render_prompt(tmpl, {{"factors", factor_list}, {"input_data", numbered(kept)}});
    req.temperature = temperature_for(spec, ctx);
    verdict = llm::complete_structured(*ctx.gateway, req, spec.output_schema.value_or("feedback_verdict"),
                                       {llm::Phase::Identification, app.app_id, ctx.usage})
                  .value;
  } catch (const std::exception& e) {
    result.degraded = true;
    result.detail = e.what();
    return result;
  }

  const std::string quality = verdict.at("Quality").get<std::string>();
  const std::string tendency = verdict.at("Tendency").get<std::string>();
  const json& info = verdict.at("RiskInfo");
  const std::string factor = normalize(ctx, info.at("Risk Factor").get<std::string>());
  if (std::find(factors.begin(), factors.end(), factor) == factors.end()) {
    result.degraded = true;
    result.detail = "risk factor '" + factor + "' outside the configured vocabulary";
    return result;
  }
  if (quality == "Low" || tendency == "Positive") return result;

  std::vector<std::string> passages;
  const json snippets = info.value("Snippets", json(""));
  auto add_passages = [&](const std::string& text) {
    std::string cur;
    for (char c : text + "|") {
      if (c == '|') {
        auto t = trim(cur);
        if (!t.empty() && t != "..." && t != "|...") passages.push_back(std::move(t));
        cur.clear();
      } else {
        cur += c == '\n' ? ' ' : c;
      }
    }
  };
  if (snippets.is_string()) {
    add_passages(snippets.get<std::string>());
  } else {
    for (const auto& s : snippets) {
      if (s.is_string()) add_passages(s.get<std::string>());
    }
  }
  for (const auto& p : passages) {
    EvidenceSnippet s;
    s.group = spec.group;
    s.dimension = "comments";
    s.summary = "User feedback (" + factor + "): " + p;
    s.raw_refs.push_back(source ? ref_of(app, *source) : RawRef{app.app_id, "comments", "user_feedback"});
    s.indicators = {factor};
    s.producer = Producer::Agent;
    result.snippets.push_back(std::move(s));
  }
  return result;
}

AgentResult detect_discrepancy(const AppRecord& app, const AgentSpec& spec, const AgentContext& ctx) {
  AgentResult result;
  const FeatureValue* desc = app.find(spec.group, "description");
  if (!desc || !desc->text() || trim(*desc->text()).empty() || app.declared_category.empty()) {
    result.degraded = true;
    result.detail = "missing description or declared category";
    return result;
  }
  if (!ctx.gateway || !ctx.prompts) {
    result.degraded = true;
    result.detail = "no gateway configured";
    return result;
  }
  std::string text = "Description: " + trim(*desc->text());
  const auto comments = feedback_comments(app);
  if (!comments.empty()) text += "\nUser feedback:\n" + join(comments, "\n");

  json verdict;
  try {
    const auto& tmpl = ctx.prompts->get(spec.template_id.value_or("discrepancy"));
    llm::CompletionRequest req;
    req.prompt = llm::render_prompt(
        tmpl, {{"app_name", app.app_name}, {"declared_category", app.declared_category}, {"text", text}});
    req.temperature = temperature_for(spec, ctx);
    verdict = llm::complete_structured(*ctx.gateway, req, spec.output_schema.value_or("discrepancy_verdict"),
                                       {llm::Phase::Identification, app.app_id, ctx.usage})
                  .value;
  } catch (const std::exception& e) {
    result.degraded = true;
    result.detail = e.what();
    return result;
  }
  if (!verdict.at("Mismatch").get<bool>()) return result;

  const auto topics = verdict.value("ObservedTopics", std::vector<std::string>{});
  EvidenceSnippet s;
  s.group = spec.group;
  s.dimension = "description";
  s.summary = "Declared as \"" + app.declared_category + "\" but description and feedback discuss " +
              (topics.empty() ? std::string("unrelated topics") : join(topics, ", ")) + ".";
  s.raw_refs.push_back(ref_of(app, *desc));
  if (const FeatureValue* c = app.find(groups::UserFeedback, "comments")) s.raw_refs.push_back(ref_of(app, *c));
  s.indicators = {"category-mismatch"};
  s.producer = Producer::Agent;
  result.snippets.push_back(std::move(s));
  return result;
}

std::vector<EvidenceSnippet> analyze_thresholds(const AppRecord& app, const AgentSpec& spec,
                                                const stats::BaselineTable& baselines) {
  std::vector<EvidenceSnippet> out;
  auto it = app.features.find(spec.group);
  if (it == app.features.end()) return out;
  for (const auto& v : it->second) {
    if (std::find(spec.baselines.begin(), spec.baselines.end(), v.dimension) == spec.baselines.end()) continue;
    const stats::CategoryBaseline* b = baselines.lookup(category_label(app), v.dimension);
    if (!b) continue;
    const std::string label = b->label.empty() ? v.dimension : b->label;
    EvidenceSnippet s;
    s.group = spec.group;
    s.dimension = v.dimension;
    s.raw_refs.push_back(ref_of(app, v));
    s.indicators = {b->indicator.empty() ? v.dimension : b->indicator};
    s.producer = Producer::Statistic;

    if (const double* x = v.number()) {
      if (b->method == stats::ThresholdMethod::ConfidenceInterval) continue;
      const auto verdict = stats::flag_baseline_anomaly(*x, *b);
      if (!verdict.is_anomaly) continue;
      s.summary = label + " was " + num(*x) + ", " +
                  (b->direction == stats::Direction::Above ? "above" : "below") + " the " +
                  (b->app_category == "*" ? std::string("default") : b->app_category) + " baseline of " +
                  num(b->threshold) + ".";
      out.push_back(std::move(s));
    } else if (const Series* series = v.series()) {
      if (b->method != stats::ThresholdMethod::ConfidenceInterval || series->size() <= b->window) continue;
      const auto points = stats::detect_temporal_fluctuation(*series, b->window, b->level);
      if (points.empty()) continue;
      const auto& p = points.back();
      s.summary = label + " moved from " + num(p.previous) + " to " + num(p.value) + ", outside the " +
                  num(b->level * 100) + "% interval [" + num(std::round(p.interval.lower * 100) / 100) + ", " +
                  num(std::round(p.interval.upper * 100) / 100) + "] of the previous " +
                  std::to_string(b->window) + " samples (" + std::to_string(points.size()) +
                  " anomalous point" + (points.size() == 1 ? "" : "s") + ").";
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<EvidenceSnippet> analyze_runtime_monitor(const AppRecord& app, const stats::BaselineTable& baselines) {
  AgentSpec spec;
  spec.group = groups::RuntimeMonitor;
  spec.analyzer = analyzers::kThreshold;
  spec.baselines = {"popup_count", "screen_off_usage_seconds", "background_wakeups"};
  return analyze_thresholds(app, spec, baselines);
}

bool is_unrelated_package(const std::string& own, const std::string& callee,
                          const std::vector<std::string>& allowlist) {
  for (const auto& prefix : allowlist) {
    if (callee == prefix || callee.rfind(prefix + ".", 0) == 0) return false;
  }
  auto labels = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ".") {
      if (c == '.') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    return out;
  };
  const auto a = labels(own);
  const auto b = labels(callee);
  std::size_t shared = 0;
  while (shared < a.size() && shared < b.size() && a[shared] == b[shared]) ++shared;
  return shared < 2;
}

std::vector<EvidenceSnippet> analyze_execution_patterns(const AppRecord& app, const AgentContext& ctx) {
  std::vector<EvidenceSnippet> out;
  const FeatureValue* own = app.find(groups::ExecutionPatterns, "package_name");
  const FeatureValue* launched = app.find(groups::ExecutionPatterns, "launched_packages");
  const FeatureValue* counts = app.find(groups::ExecutionPatterns, "launch_count");
  const std::vector<std::string> empty;
  const auto& allow = ctx.registry ? ctx.registry->sdk_allowlist : empty;

  std::vector<std::string> unrelated;
  if (own && own->text() && launched && launched->text()) {
    for (const auto& p : split_list(*launched->text())) {
      if (is_unrelated_package(*own->text(), p, allow)) unrelated.push_back(p);
    }
  }

  std::optional<stats::AnomalyPoint> jump;
  std::size_t window = stats::kDefaultWindow;
  double level = stats::kDefaultLevel;
  if (ctx.baselines) {
    if (const auto* b = ctx.baselines->lookup(category_label(app), "launch_count")) {
      window = b->window;
      level = b->level;
    }
  }
  if (counts && counts->series() && counts->series()->size() > window) {
    const auto points = stats::detect_temporal_fluctuation(*counts->series(), window, level);
    if (!points.empty()) jump = points.back();
  }

  const std::size_t shown = std::min<std::size_t>(unrelated.size(), 5);
  std::string pkg_list = join(std::vector<std::string>(unrelated.begin(), unrelated.begin() + shown), ", ");
  if (unrelated.size() > shown) pkg_list += ", ...";

  EvidenceSnippet s;
  s.group = groups::ExecutionPatterns;
  s.producer = Producer::Statistic;
  if (!unrelated.empty() && jump) {
    s.dimension = "launched_packages";
    s.summary = "Matched the morphing mode: launches changed from " + num(jump->previous) + " to " +
                num(jump->value) + " and the app launched " + std::to_string(unrelated.size()) +
                " unrelated package" + (unrelated.size() == 1 ? "" : "s") + ": " + pkg_list + ".";
    s.raw_refs = {ref_of(app, *launched), ref_of(app, *counts)};
    if (own) s.raw_refs.push_back(ref_of(app, *own));
    s.indicators = {"anomalous-launches", "malicious-callee"};
  } else if (!unrelated.empty()) {
    s.dimension = "launched_packages";
    s.summary = "Launched " + std::to_string(unrelated.size()) + " package" + (unrelated.size() == 1 ? "" : "s") +
                " unrelated to its own namespace: " + pkg_list + ".";
    s.raw_refs = {ref_of(app, *launched)};
    if (own) s.raw_refs.push_back(ref_of(app, *own));
    s.indicators = {"malicious-callee"};
  } else if (jump) {
    s.dimension = "launch_count";
    s.summary = "Launch count jumped from " + num(jump->previous) + " to " + num(jump->value) +
                ", outside the interval of the previous samples.";
    s.raw_refs = {ref_of(app, *counts)};
    s.indicators = {"anomalous-launches"};
  } else {
    return out;
  }
  std::sort(s.raw_refs.begin(), s.raw_refs.end());
  out.push_back(std::move(s));
  return out;
}

std::vector<EvidenceSnippet> analyze_app_distribution(const AppRecord& app, const AgentContext& ctx) {
  std::vector<EvidenceSnippet> out;
  const FeatureValue* dist = app.find(groups::AppDistribution, "distributed_apps");
  if (!dist || !dist->text()) return out;
  const auto apps = split_list(*dist->text());
  std::vector<std::string> removed;
  for (const auto& a : apps) {
    const bool known = (ctx.registry && ctx.registry->known_delisted_apps.count(a)) || ctx.delisted_ids.count(a);
    if (known) removed.push_back(a);
  }
  if (removed.empty()) return out;
  EvidenceSnippet s;
  s.group = groups::AppDistribution;
  s.dimension = "distributed_apps";
  s.summary = "Distributes " + join(apps, ", ") + ", of which " + join(removed, ", ") +
              (removed.size() == 1 ? " is a previously removed app." : " are previously removed apps.");
  s.raw_refs = {ref_of(app, *dist)};
  s.indicators = {"distributes-delisted-app"};
  s.producer = Producer::Statistic;
  out.push_back(std::move(s));
  return out;
}

std::vector<EvidenceSnippet> analyze_antivirus(const AppRecord& app, const stats::BaselineTable& baselines) {
  std::vector<EvidenceSnippet> out;
  const FeatureValue* sdks = app.find(groups::AntiVirusEngine, "detected_sdks");
  for (const char* dim : {"ad_sdk_detections", "malware_detections"}) {
    const FeatureValue* v = app.find(groups::AntiVirusEngine, dim);
    if (!v || !v->number()) continue;
    const auto* b = baselines.lookup(category_label(app), dim);
    if (!b || b->method == stats::ThresholdMethod::ConfidenceInterval) continue;
    if (!stats::flag_baseline_anomaly(*v->number(), *b).is_anomaly) continue;
    EvidenceSnippet s;
    s.group = groups::AntiVirusEngine;
    s.dimension = dim;
    s.producer = Producer::Statistic;
    s.raw_refs = {ref_of(app, *v)};
    s.indicators = {b->indicator.empty() ? dim : b->indicator};
    const std::string what = std::string(dim) == "ad_sdk_detections" ? "ad SDK implant" : "malware detection";
    s.summary = "The engine reports " + num(*v->number()) + " " + what + (*v->number() == 1.0 ? "" : "s");
    if (std::string(dim) == "ad_sdk_detections" && sdks && sdks->text()) {
      auto list = split_list(*sdks->text());
      if (list.size() > 3) {
        list.resize(3);
        list.push_back("...");
      }
      s.summary += ", including " + join(list, ", ");
      s.raw_refs.push_back(ref_of(app, *sdks));
      std::sort(s.raw_refs.begin(), s.raw_refs.end());
    }
    s.summary += ".";
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<EvidenceSnippet> analyze_text_flags(const AppRecord& app, const AgentSpec& spec,
                                                const AgentContext& ctx) {
  std::vector<EvidenceSnippet> out;
  if (!ctx.registry) return out;
  auto flags_it = ctx.registry->text_flags.find(spec.group);
  if (flags_it == ctx.registry->text_flags.end()) return out;
  for (const auto& dim : spec.baselines) {
    const FeatureValue* v = app.find(spec.group, dim);
    if (!v || !v->text()) continue;
    std::map<std::string, std::vector<std::string>> by_indicator;
    for (const auto& label : split_list(*v->text())) {
      const std::string key = retrieval::canonical_form(label);
      if (auto f = flags_it->second.find(key); f != flags_it->second.end()) by_indicator[f->second].push_back(label);
    }
    for (const auto& [indicator, labels] : by_indicator) {
      EvidenceSnippet s;
      s.group = spec.group;
      s.dimension = dim;
      s.summary = "Pre-computed " + dim + " include flagged labels: " + join(labels, ", ") + ".";
      s.raw_refs = {ref_of(app, *v)};
      s.indicators = {indicator};
      s.producer = Producer::Statistic;
      out.push_back(std::move(s));
    }
  }
  return out;
}

AgentResult run_group_agent(const AgentSpec& spec, const AppRecord& app, const AgentContext& ctx) {
  AgentResult result;
  if (!app.has_group(spec.group)) return result;
  static const stats::BaselineTable kEmpty;
  const stats::BaselineTable& baselines = ctx.baselines ? *ctx.baselines : kEmpty;

  if (spec.analyzer == analyzers::kUserFeedback) {
    result = analyze_user_feedback(feedback_comments(app), app, spec, ctx);
  } else if (spec.analyzer == analyzers::kDiscrepancy) {
    result = detect_discrepancy(app, spec, ctx);
  } else if (spec.analyzer == analyzers::kExecutionPatterns) {
    result.snippets = analyze_execution_patterns(app, ctx);
  } else if (spec.analyzer == analyzers::kAppDistribution) {
    result.snippets = analyze_app_distribution(app, ctx);
  } else if (spec.analyzer == analyzers::kAntiVirus) {
    result.snippets = analyze_antivirus(app, baselines);
  } else if (spec.analyzer == analyzers::kTextFlags) {
    result.snippets = analyze_text_flags(app, spec, ctx);
  } else if (spec.analyzer == analyzers::kThreshold) {
    result.snippets = analyze_thresholds(app, spec, baselines);
  } else {
    throw Error("unknown analyzer '" + spec.analyzer + "'");
  }
  const Producer producer = spec.mode == AgentMode::Llm ? Producer::Agent : Producer::Statistic;
  for (auto& s : result.snippets) {
    s.group = spec.group;
    if (spec.mode != AgentMode::Hybrid) s.producer = producer;
    s.indicators = ctx.normalizer ? ctx.normalizer->normalize_all(s.indicators)
                                  : retrieval::IndicatorNormalizer{}.normalize_all(s.indicators);
  }
  return result;
}

AppEvidence run_all_agents(const AppRecord& app, const AgentContext& ctx) {
  AppEvidence ev;
  if (!ctx.registry) throw Error("agent context without registry");
  for (const auto& spec : ctx.registry->specs()) {
    AgentResult r;
    try {
      r = run_group_agent(spec, app, ctx);
    } catch (const std::exception& e) {
      r.snippets.clear();
      r.degraded = true;
      r.detail = e.what();
    }
    if (r.degraded) {
      ev.degraded_groups.push_back(spec.group);
      ev.degraded_detail[spec.group] = r.detail;
    }
    for (auto& s : r.snippets) ev.snippets.push_back(std::move(s));
  }
  std::sort(ev.snippets.begin(), ev.snippets.end(), snippet_less);
  std::sort(ev.degraded_groups.begin(), ev.degraded_groups.end());
  return ev;
}

}  // namespace apprisk::agents
