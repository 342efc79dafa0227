#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "apprisk/agents/agents.hpp"
#include "apprisk/core/json_io.hpp"
#include "apprisk/llm/gateway.hpp"
#include "apprisk/retrieval/retrieval.hpp"
#include "apprisk/tree/tree.hpp"

namespace apprisk::pipeline {

inline constexpr const char* kReportSchemaVersion = "1.0";

enum class ValidationPolicy { Strict, Advisory };
std::string_view to_string(ValidationPolicy p);
ValidationPolicy validation_policy_from_string(std::string_view s);

/// Which of the two gates run. Everything except Both exists for ablation runs.
enum class GateMode { None, TreeOnly, HistoryOnly, Both };
std::string_view to_string(GateMode g);
GateMode gate_mode_from_string(std::string_view s);

enum class ValidationMode { Full, RuleOnlyDegraded, Skipped };
std::string_view to_string(ValidationMode m);

struct Precedent {
  std::string app_id;
  std::string app_name;
  RiskCategory category = RiskCategory::AdPopups;
  std::vector<std::string> shared_indicators;
  double similarity = 0.0;
  bool operator==(const Precedent&) const = default;
};

struct ValidatedRisk {
  tree::CandidateRisk candidate;
  std::vector<Precedent> precedents;
  ValidationMode mode = ValidationMode::Full;
};

/// Shared, read-mostly state for analyses. Pointers must outlive the engine.
struct Engine {
  const tree::RiskTree* tree = nullptr;
  retrieval::CaseIndex* index = nullptr;
  const retrieval::Embedder* embedder = nullptr;
  llm::Gateway* gateway = nullptr;
  const llm::PromptLibrary* prompts = nullptr;
  const stats::BaselineTable* baselines = nullptr;
  const agents::AgentRegistry* registry = nullptr;
  const retrieval::IndicatorNormalizer* normalizer = nullptr;
  ValidationPolicy policy = ValidationPolicy::Strict;
  GateMode gate = GateMode::Both;
  std::size_t top_k = retrieval::kDefaultTopK;
  double temperature = llm::kDefaultTemperature;
};

struct StageTimings {
  double ingest = 0, agents = 0, tree = 0, history = 0, report = 0, narrative = 0;
  double total() const { return ingest + agents + tree + history + report + narrative; }
};

enum class OutcomeStatus { Clean, Flagged, Error };
std::string_view to_string(OutcomeStatus s);

struct AnalysisOutcome {
  std::string app_id;
  OutcomeStatus status = OutcomeStatus::Clean;
  std::vector<RiskCategory> categories;
  json report;  // null unless flagged
  std::string detail;
  std::vector<FeatureGroupId> degraded_groups;
  llm::UsageStats identification;
  llm::UsageStats evidence_generation;
  StageTimings timings;
  std::uint64_t index_version = 0;
};

/// Outcome without timings: the part that must be identical across runs.
json outcome_to_json(const AnalysisOutcome& o);

/// Candidates that would exist with no corroboration rule: every root that has
/// any snippet from one of its groups.
std::vector<tree::CandidateRisk> ungated_candidates(const tree::RiskTree& tree,
                                                    std::span<const EvidenceSnippet> snippets);

std::vector<ValidatedRisk> validate_with_history(const std::vector<tree::CandidateRisk>& candidates,
                                                 const retrieval::CaseIndex::Snapshot& snapshot,
                                                 const Engine& engine, const std::string& app_id,
                                                 llm::UsageLedger* usage = nullptr);

struct ReportContext {
  std::vector<FeatureGroupId> degraded_groups;
  std::string tree_version;
  std::uint64_t index_version = 0;
  ValidationPolicy policy = ValidationPolicy::Strict;
  GateMode gate = GateMode::Both;
};

/// Assembles the machine-path report (no model text). Narrative fields are
/// left empty for generate_narrative. Throws on broken invariants.
json generate_structured_report(const std::vector<ValidatedRisk>& risks, const AppRecord& app,
                                const ReportContext& context);

struct NarrativeResult {
  std::string text;
  std::string source;  // llm | llm_repaired | template_fallback
};

/// Deterministic narrative assembled from the structured report.
std::string template_narrative(const json& report);
/// Names of categories or groups the narrative fails to mention; empty means it passes.
std::vector<std::string> narrative_gaps(const json& report, const std::string& narrative);
NarrativeResult generate_narrative(const json& report, const Engine& engine, llm::UsageLedger* usage = nullptr);

/// Throws if the report breaks its invariants against the input record.
void check_report_invariants(const json& report, const AppRecord& app, bool require_two_groups);

AnalysisOutcome run_analysis(const AppRecord& app, const Engine& engine);

struct BatchSummary {
  std::size_t total = 0, clean = 0, flagged = 0, errors = 0;
  llm::UsageSummary usage;
  double wall_seconds = 0.0;
  std::size_t parallelism = 1;
};
void to_json(json& j, const BatchSummary& s);

struct BatchResult {
  std::vector<AnalysisOutcome> outcomes;  // input order
  BatchSummary summary;
};

/// Analyzes every record with up to `parallelism` workers. One app's failure
/// never affects another.
BatchResult run_batch(const std::vector<AppRecord>& apps, const Engine& engine, std::size_t parallelism);

/// Planted labels: app_id -> categories the app truly carries.
using LabelSet = std::map<std::string, std::set<RiskCategory>>;
LabelSet load_labels(const std::string& path);

struct LabelScore {
  std::size_t false_positives = 0;  // flagged (app, category) pairs not in the labels
  std::size_t true_positives = 0;
  std::size_t planted = 0;
  double recall() const { return planted == 0 ? 1.0 : static_cast<double>(true_positives) / planted; }
};
void to_json(json& j, const LabelScore& s);
LabelScore score_outcomes(const std::vector<AnalysisOutcome>& outcomes, const LabelSet& labels);

}  // namespace apprisk::pipeline
