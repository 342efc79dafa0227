#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/core/model.hpp"
#include "apprisk/llm/gateway.hpp"

namespace apprisk::retrieval {

inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr std::size_t kMinSharedIndicators = 2;

struct Embedding {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const std::string& text) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

/// Signed feature hashing over word unigrams and character trigrams. Stable
/// across runs and platforms for a given (dim, seed).
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x5eed);
  Embedding embed(const std::string& text) const override;
  std::size_t dim() const override { return dim_; }
  std::string id() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

struct RemoteEmbedderConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model = "bge-large-zh-v1.5";
  std::string token_env = "APPRISK_LLM_TOKEN";
  std::size_t dim = 1024;
  int timeout_seconds = 60;
};

/// POST {base_url}/v1/embeddings with {"model", "input"}.
class RemoteEmbedder : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config);
  Embedding embed(const std::string& text) const override;
  std::size_t dim() const override { return config_.dim; }
  std::string id() const override { return "remote:" + config_.model; }

 private:
  RemoteEmbedderConfig config_;
};

/// Throws on empty text.
Embedding embed_text(const Embedder& embedder, const std::string& text);

/// Throws on dimension mismatch or a zero vector.
double cosine_similarity(const Embedding& a, const Embedding& b);

// ---------------------------------------------------------------------------
// Indicators
// ---------------------------------------------------------------------------

class IndicatorNormalizer {
 public:
  /// Alias table seeded with malicious-call-callee -> malicious-callee.
  static IndicatorNormalizer defaults();
  /// {"schema_version": "1", "aliases": {"raw": "canonical", ...}}
  static IndicatorNormalizer from_json(const json& doc);
  static IndicatorNormalizer load(const std::string& path);

  /// Adds an alias; chains are resolved so normalize() stays idempotent. Cycles throw.
  void add_alias(const std::string& from, const std::string& to);

  /// Lowercase, trim, whitespace runs -> '-', then alias lookup.
  std::string normalize(const std::string& raw) const;
  std::vector<std::string> normalize_all(const std::vector<std::string>& raw) const;
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

 private:
  std::map<std::string, std::string> aliases_;
};

/// Case/spacing rule only, without aliases.
std::string canonical_form(const std::string& raw);

/// Sorted intersection of two indicator lists (inputs need not be sorted).
std::vector<std::string> shared_indicators(const std::vector<std::string>& a,
                                           const std::vector<std::string>& b);

// ---------------------------------------------------------------------------
// Cases and index
// ---------------------------------------------------------------------------

enum class CaseOrigin { SeedCorpus, AnalystConfirmed };
std::string_view to_string(CaseOrigin o);
CaseOrigin case_origin_from_string(std::string_view s);

struct DelistedCase {
  std::string app_id;
  std::string app_name;
  RiskCategory risk_category = RiskCategory::AdPopups;
  std::vector<std::string> indicators;  // sorted, unique, canonical
  std::vector<FeatureGroupId> groups;   // groups that carried evidence; feeds the bipartite map
  std::string snippet_text;
  Embedding embedding;
  std::int64_t delisted_at = 0;
  CaseOrigin origin = CaseOrigin::SeedCorpus;
  /// Report id for analyst-confirmed cases; empty for seed cases.
  std::string source_ref;

  bool operator==(const DelistedCase&) const = default;
};

void to_json(json& j, const DelistedCase& c);
/// Embedding is optional in JSON; callers fill it when absent.
void from_json(const json& j, DelistedCase& c);

/// Reads seed cases (JSON-Lines) and embeds snippet_text where no embedding is stored.
std::vector<DelistedCase> load_cases_jsonl(const std::string& path, const Embedder& embedder,
                                           const IndicatorNormalizer& normalizer);

std::vector<std::string> validate_case(const DelistedCase& c, std::size_t dim);

struct ScoredCase {
  std::shared_ptr<const DelistedCase> item;
  double similarity = 0.0;
};

struct IndexStats {
  std::uint64_t version = 0;
  std::size_t dim = 0;
  std::size_t total = 0;
  std::map<RiskCategory, std::size_t> per_category;
  std::map<CaseOrigin, std::size_t> per_origin;
};
void to_json(json& j, const IndexStats& s);

/// Append-only case collection. Readers take immutable snapshots; writers are
/// serialized. With a directory attached, every append is logged (fsync) before
/// it becomes visible, and compact() folds the log into a snapshot file.
class CaseIndex {
 public:
  struct Snapshot {
    std::uint64_t version = 0;
    std::size_t dim = 0;
    std::vector<std::shared_ptr<const DelistedCase>> cases;
  };

  explicit CaseIndex(std::size_t dim);

  /// Opens (or creates) a persisted index. Torn trailing log lines are dropped.
  static std::unique_ptr<CaseIndex> open(const std::filesystem::path& dir, std::size_t dim);

  std::shared_ptr<const Snapshot> snapshot() const;
  std::uint64_t version() const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const;

  /// Returns the new version. Throws on dimension mismatch, invalid case or
  /// duplicate (app_id, category) "already indexed".
  std::uint64_t append(DelistedCase c);
  bool contains(const std::string& app_id, RiskCategory category) const;
  /// Throws exactly what append() would, without appending.
  void check(const DelistedCase& c) const;

  /// Writes a snapshot file and truncates the log. No-op without a directory.
  void compact();
  IndexStats stats() const;

  /// Persistence files (empty paths for in-memory indexes).
  std::filesystem::path snapshot_path() const;
  std::filesystem::path log_path() const;

 private:
  void check_appendable(const DelistedCase& c, const Snapshot& snap) const;

  std::size_t dim_;
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
  std::shared_ptr<const Snapshot> snap_;
};

/// Exact top-k by descending cosine; ties by ascending app_id then category.
std::vector<ScoredCase> query_top_k(const CaseIndex::Snapshot& snapshot, const Embedding& query,
                                    std::size_t k = kDefaultTopK,
                                    std::optional<RiskCategory> category = std::nullopt);

// ---------------------------------------------------------------------------
// Similar-pattern validation
// ---------------------------------------------------------------------------

struct PatternTarget {
  std::string app_id;
  std::vector<std::string> indicators;
};

struct PatternMatch {
  std::shared_ptr<const DelistedCase> item;
  std::vector<std::string> shared;
  double similarity = 0.0;
};

struct PatternResult {
  std::vector<PatternMatch> matches;
  bool degraded = false;
  std::size_t claimed = 0;   // ids the model named
  std::size_t rejected = 0;  // claims removed by the shared-indicator floor
  std::string detail;
};

/// Renders the similar-pattern prompt, asks the model which candidates are
/// similar, and keeps only claims whose normalized indicator sets share at
/// least two tokens with the target. A gateway failure or malformed output
/// falls back to the same rule applied directly, marked degraded.
PatternResult match_similar_pattern(const PatternTarget& target, const std::vector<ScoredCase>& candidates,
                                    llm::Gateway& gateway, const llm::PromptTemplate& prompt,
                                    const IndicatorNormalizer& normalizer, const llm::CallTag& tag = {},
                                    double temperature = llm::kDefaultTemperature);

/// The rule alone, no model call.
std::vector<PatternMatch> rule_based_matches(const PatternTarget& target,
                                             const std::vector<ScoredCase>& candidates,
                                             const IndicatorNormalizer& normalizer);

}  // namespace apprisk::retrieval
