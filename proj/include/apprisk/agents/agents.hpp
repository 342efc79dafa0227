#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/core/model.hpp"
#include "apprisk/llm/gateway.hpp"
#include "apprisk/retrieval/retrieval.hpp"
#include "apprisk/stats/stats.hpp"

namespace apprisk::agents {

enum class AgentMode { Llm, Statistical, Hybrid };
std::string_view to_string(AgentMode m);
AgentMode agent_mode_from_string(std::string_view s);

/// Analyzer names understood by run_group_agent.
namespace analyzers {
inline constexpr const char* kUserFeedback = "user_feedback";
inline constexpr const char* kDiscrepancy = "discrepancy";
inline constexpr const char* kExecutionPatterns = "execution_patterns";
inline constexpr const char* kAppDistribution = "app_distribution";
inline constexpr const char* kAntiVirus = "antivirus";
inline constexpr const char* kThreshold = "threshold";
inline constexpr const char* kTextFlags = "text_flags";
}  // namespace analyzers

struct AgentSpec {
  FeatureGroupId group;
  AgentMode mode = AgentMode::Statistical;
  std::string analyzer;
  std::optional<std::string> template_id;
  std::optional<std::string> output_schema;
  /// Dimensions this agent evaluates against the baseline table (or flag table).
  std::vector<std::string> baselines;
  std::optional<double> temperature;
};

/// Empty when the AgentSpec is consistent: llm mode needs a template, statistical
/// mode needs baselines, and the analyzer must be known.
std::vector<std::string> validate_spec(const AgentSpec& spec);

class AgentRegistry {
 public:
  static AgentRegistry from_json(const json& doc);
  static AgentRegistry load(const std::string& path);

  void add(AgentSpec spec);
  const AgentSpec* find(const FeatureGroupId& group) const;
  const std::vector<AgentSpec>& specs() const { return specs_; }

  // Shared analyzer settings from the same document.
  std::vector<std::string> risk_factors;
  std::vector<std::string> sdk_allowlist;
  std::set<std::string> known_delisted_apps;
  /// group -> (label word -> indicator) for text_flags analyzers.
  std::map<FeatureGroupId, std::map<std::string, std::string>> text_flags;
  double default_temperature = llm::kDefaultTemperature;

 private:
  std::vector<AgentSpec> specs_;
};

/// The six factors shipped with the feedback prompt.
std::vector<std::string> default_risk_factors();

struct AgentContext {
  llm::Gateway* gateway = nullptr;
  const llm::PromptLibrary* prompts = nullptr;
  const stats::BaselineTable* baselines = nullptr;
  const AgentRegistry* registry = nullptr;
  const retrieval::IndicatorNormalizer* normalizer = nullptr;
  /// Extra delisted ids (e.g. the case index) consulted by the distribution analyzer.
  std::set<std::string> delisted_ids;
  /// Per-analysis usage ledger attached to every model call.
  llm::UsageLedger* usage = nullptr;
};

struct AgentResult {
  std::vector<EvidenceSnippet> snippets;
  bool degraded = false;
  std::string detail;
};

/// Dispatches to the AgentSpec's analyzer. Returns nothing when the app has no
/// features for the group. Model failures degrade instead of throwing.
AgentResult run_group_agent(const AgentSpec& spec, const AppRecord& app, const AgentContext& ctx);

struct AppEvidence {
  std::vector<EvidenceSnippet> snippets;  // snippet_less order
  std::vector<FeatureGroupId> degraded_groups;
  std::map<FeatureGroupId, std::string> degraded_detail;
};

/// Runs every registered agent over the app.
AppEvidence run_all_agents(const AppRecord& app, const AgentContext& ctx);

// Individual analyzers, exposed for tests.

AgentResult analyze_user_feedback(const std::vector<std::string>& comments, const AppRecord& app,
                                  const AgentSpec& spec, const AgentContext& ctx);
AgentResult detect_discrepancy(const AppRecord& app, const AgentSpec& spec, const AgentContext& ctx);
std::vector<EvidenceSnippet> analyze_thresholds(const AppRecord& app, const AgentSpec& spec,
                                                const stats::BaselineTable& baselines);
std::vector<EvidenceSnippet> analyze_runtime_monitor(const AppRecord& app, const stats::BaselineTable& baselines);
std::vector<EvidenceSnippet> analyze_execution_patterns(const AppRecord& app, const AgentContext& ctx);
std::vector<EvidenceSnippet> analyze_app_distribution(const AppRecord& app, const AgentContext& ctx);
std::vector<EvidenceSnippet> analyze_antivirus(const AppRecord& app, const stats::BaselineTable& baselines);
std::vector<EvidenceSnippet> analyze_text_flags(const AppRecord& app, const AgentSpec& spec,
                                                const AgentContext& ctx);

/// Comment lines of the UserFeedback "comments" dimension, blanks removed.
std::vector<std::string> feedback_comments(const AppRecord& app);

/// True when `callee` shares fewer than two leading labels with `own` and is
/// not under an allowlisted prefix.
bool is_unrelated_package(const std::string& own, const std::string& callee,
                          const std::vector<std::string>& allowlist);

/// Splits a comma/newline separated list, trimming blanks.
std::vector<std::string> split_list(const std::string& text);

}  // namespace apprisk::agents
