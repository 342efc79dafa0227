#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/core/model.hpp"

namespace apprisk::llm {

inline constexpr double kDefaultTemperature = 0.7;

/// Transient backend failure (connection refused, 5xx, 429). The gateway retries these.
class RetryableError : public Error {
 public:
  using Error::Error;
};

/// Backend failure after retries were exhausted, or a non-retryable response.
class TerminalError : public Error {
 public:
  using Error::Error;
};

/// Model output without a parseable object for the requested schema.
class MalformedOutputError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

struct FewShotExample {
  std::string input;
  std::string output;
};

struct PromptTemplate {
  std::string template_id;
  std::string body;  // {{name}} placeholders
  std::string expected_output;
  std::vector<FewShotExample> few_shot_examples;
};

/// Placeholder names in order of first appearance. "few_shot_examples" is
/// reserved: when present the examples render there, otherwise they are
/// appended after the body.
std::vector<std::string> placeholders(const std::string& body);

std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

/// Parses the on-disk prompt asset format:
///   @template <id>
///   @output <schema id>
///   @body
///   ...text...
///   @example-input
///   ...text...
///   @example-output
///   ...text...
PromptTemplate parse_prompt_asset(const std::string& text);

class PromptLibrary {
 public:
  void add(PromptTemplate tmpl);
  /// Loads every *.prompt file in `dir`. Ids must be unique.
  static PromptLibrary load_directory(const std::string& dir);

  const PromptTemplate& get(const std::string& template_id) const;
  bool contains(const std::string& template_id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Completion
// ---------------------------------------------------------------------------

struct CompletionRequest {
  std::string prompt;
  double temperature = kDefaultTemperature;
  std::size_t max_tokens = 1024;
  std::string backend_id;
};

struct UsageStats {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency = 0.0;  // seconds

  std::size_t total_tokens() const { return prompt_tokens + completion_tokens; }
  UsageStats& operator+=(const UsageStats& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    latency += o.latency;
    return *this;
  }
};

enum class Phase { Identification, EvidenceGeneration };
std::string_view to_string(Phase p);

struct BackendReply {
  std::string text;
  std::optional<std::size_t> prompt_tokens;
  std::optional<std::size_t> completion_tokens;
  /// Backends that simulate time (the mock) report it; otherwise wall time is used.
  std::optional<double> latency;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply generate(const CompletionRequest& request) = 0;
};

struct Completion {
  std::string text;
  UsageStats usage;
};

/// Whitespace-delimited token estimate used when a backend reports no usage.
std::size_t estimate_tokens(std::string_view text);

// ---------------------------------------------------------------------------
// Usage accounting
// ---------------------------------------------------------------------------

struct PhaseTotals {
  UsageStats total;
  std::size_t calls = 0;
  std::size_t apps = 0;
  double avg_tokens_per_app = 0.0;
  double avg_latency_per_app = 0.0;
};

struct UsageSummary {
  PhaseTotals identification;
  PhaseTotals evidence_generation;
  std::size_t apps = 0;
  double avg_tokens_per_app = 0.0;
  double avg_latency_per_app = 0.0;
};

void to_json(json& j, const UsageStats& u);
void from_json(const json& j, UsageStats& u);
void to_json(json& j, const PhaseTotals& t);
void to_json(json& j, const UsageSummary& s);

/// Thread-safe per-phase accumulator. Averages are per app; records without an
/// app id count as one app each.
class UsageLedger {
 public:
  void record(const UsageStats& stats, Phase phase, const std::string& app_id = {});
  PhaseTotals totals(Phase phase) const;
  UsageSummary summary() const;
  void merge(const UsageLedger& other);
  void clear();

 private:
  struct Bucket {
    UsageStats total;
    std::size_t calls = 0;
    std::map<std::string, UsageStats> per_app;
    std::size_t anonymous = 0;
  };
  PhaseTotals totals_locked(const Bucket& b) const;

  mutable std::mutex mu_;
  Bucket id_;
  Bucket ev_;
};

struct CallTag {
  Phase phase = Phase::Identification;
  std::string app_id;
  /// Optional second ledger (e.g. one analysis run) that also receives the usage.
  UsageLedger* sink = nullptr;
};

struct GatewayOptions {
  std::size_t max_in_flight = 4;
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{20};
};

/// Shared entry point for every model call. Bounds concurrent backend requests,
/// retries transient failures, and accounts usage per phase.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  void register_backend(const std::string& id, std::shared_ptr<Backend> backend);
  bool has_backend(const std::string& id) const;
  /// Backend used when a request leaves backend_id empty.
  void set_default_backend(const std::string& id);
  const std::string& default_backend() const { return default_backend_; }

  Completion complete(const CompletionRequest& request, const CallTag& tag = {});

  UsageLedger& usage() { return usage_; }
  const UsageLedger& usage() const { return usage_; }
  const GatewayOptions& options() const { return options_; }
  std::size_t backend_calls() const { return backend_calls_.load(); }

 private:
  GatewayOptions options_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
  std::string default_backend_;
  std::counting_semaphore<1024> slots_;
  UsageLedger usage_;
  std::atomic<std::size_t> backend_calls_{0};
};

// ---------------------------------------------------------------------------
// Structured output
// ---------------------------------------------------------------------------

class SchemaRegistry {
 public:
  /// Registers the output schemas the shipped prompts ask for:
  /// feedback_verdict, discrepancy_verdict, similar_pattern.
  static const SchemaRegistry& builtin();

  void add(const std::string& schema_id, json schema, json canonical_example);
  const json& schema(const std::string& schema_id) const;
  const json& canonical_example(const std::string& schema_id) const;
  bool contains(const std::string& schema_id) const;
  std::vector<std::string> ids() const;

 private:
  struct Entry {
    json schema;
    json example;
  };
  std::map<std::string, Entry> entries_;
};

/// Returns the first JSON object in `text` that parses and validates against the
/// schema. Tolerates surrounding prose, code fences, reasoning traces and raw
/// newlines inside string literals. Throws MalformedOutputError otherwise.
json parse_structured_output(const std::string& text, const std::string& schema_id,
                             const SchemaRegistry& registry = SchemaRegistry::builtin());

struct StructuredCompletion {
  json value;
  bool repaired = false;  // the first answer was malformed and the re-prompt succeeded
};

/// complete() followed by parse_structured_output(). A malformed answer gets one
/// repair re-prompt showing the schema's canonical example; a second malformed
/// answer throws MalformedOutputError.
StructuredCompletion complete_structured(Gateway& gateway, const CompletionRequest& request,
                                         const std::string& schema_id, const CallTag& tag = {},
                                         const SchemaRegistry& registry = SchemaRegistry::builtin());

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Deterministic backend dispatching on task markers in the prompt text.
class MockBackend : public Backend {
 public:
  using Handler = std::function<std::string(const std::string& prompt)>;

  void on(std::string marker, Handler handler);
  void set_fallback(Handler handler);
  BackendReply generate(const CompletionRequest& request) override;

 private:
  std::vector<std::pair<std::string, Handler>> handlers_;
  Handler fallback_;
};

struct MockVocabulary {
  /// risk factor -> trigger words (lowercase, matched as substrings of a comment)
  std::vector<std::pair<std::string, std::vector<std::string>>> risk_factors;
  std::vector<std::string> positive_words;
  /// topic word -> app categories where the topic is expected
  std::map<std::string, std::vector<std::string>> topic_categories;

  static MockVocabulary defaults();
  static MockVocabulary from_json(const json& doc);
};

/// The rule-backed mock used by tests and offline runs: it answers the shipped
/// feedback, discrepancy, similar-pattern and narrative prompts from `vocab`.
std::shared_ptr<MockBackend> make_rule_backed_mock(MockVocabulary vocab = MockVocabulary::defaults());

/// Markers the shipped prompt assets contain; the mock dispatches on them.
namespace task_markers {
inline constexpr const char* kUserFeedback = "Task: user-feedback-analysis";
inline constexpr const char* kDiscrepancy = "Task: category-discrepancy";
inline constexpr const char* kSimilarPattern = "Task: similar-pattern-retrieval";
inline constexpr const char* kNarrative = "Task: risk-narrative";
}  // namespace task_markers

/// Replays canned responses (cycling) and can fail the first N calls.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses, int fail_first = 0,
                           bool fail_terminal = false);
  BackendReply generate(const CompletionRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<std::string> responses_;
  std::atomic<int> fail_remaining_;
  bool fail_terminal_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> served_{0};
};

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "local-model";
  std::string token_env = "APPRISK_LLM_TOKEN";
  int timeout_seconds = 120;
};

/// OpenAI-compatible chat-completions client for a locally hosted model server.
/// POST {base_url}/v1/chat/completions
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  BackendReply generate(const CompletionRequest& request) override;

 private:
  HttpBackendConfig config_;
};

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& url);

}  // namespace apprisk::llm
