#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apprisk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Risk categories
// ---------------------------------------------------------------------------

enum class RiskCategory {
  AdPopups,
  UnexpectedPopups,
  Retention,
  AppMorphing,
  IllegalFeatures,
  ContentRisk,
  AppCounterfeiting,
  Malware,
};

inline constexpr std::array<RiskCategory, 8> kAllRiskCategories = {
    RiskCategory::AdPopups,        RiskCategory::UnexpectedPopups,
    RiskCategory::Retention,       RiskCategory::AppMorphing,
    RiskCategory::IllegalFeatures, RiskCategory::ContentRisk,
    RiskCategory::AppCounterfeiting, RiskCategory::Malware,
};

/// Stable identifier used in every serialized document ("AdPopups").
std::string_view to_string(RiskCategory category);
/// Human-facing name used in reports and narratives ("Ad Pop-ups").
std::string_view display_name(RiskCategory category);
std::optional<RiskCategory> parse_risk_category(std::string_view text);
/// Throws apprisk::Error on unknown text.
RiskCategory risk_category_from_string(std::string_view text);

// ---------------------------------------------------------------------------
// Feature groups
// ---------------------------------------------------------------------------

enum class FeatureOrigin { KnowledgeDriven, DataDriven };

std::string_view to_string(FeatureOrigin origin);
FeatureOrigin feature_origin_from_string(std::string_view text);

/// Open set of feature-group names. The built-in catalog covers the groups the
/// engine ships analyzers for; configs may register more.
class FeatureGroupId {
 public:
  FeatureGroupId() = default;
  explicit FeatureGroupId(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  bool empty() const { return name_.empty(); }

  auto operator<=>(const FeatureGroupId&) const = default;

 private:
  std::string name_;
};

namespace groups {
inline const FeatureGroupId Blacklist{"Blacklist"};
inline const FeatureGroupId RuntimeMonitor{"RuntimeMonitor"};
inline const FeatureGroupId AppDistribution{"AppDistribution"};
inline const FeatureGroupId UserFeedback{"UserFeedback"};
inline const FeatureGroupId Discrepancy{"Discrepancy"};
inline const FeatureGroupId Screenshot{"Screenshot"};
inline const FeatureGroupId AppSimilarity{"AppSimilarity"};
inline const FeatureGroupId NetworkFeature{"NetworkFeature"};
inline const FeatureGroupId AntiVirusEngine{"AntiVirusEngine"};
inline const FeatureGroupId ExecutionPatterns{"ExecutionPatterns"};
inline const FeatureGroupId UsagePatterns{"UsagePatterns"};
inline const FeatureGroupId StaticAnalysis{"StaticAnalysis"};
inline const FeatureGroupId DynamicLoad{"DynamicLoad"};
inline const FeatureGroupId StoreMetadata{"StoreMetadata"};
inline const FeatureGroupId UpdateFrequency{"UpdateFrequency"};
}  // namespace groups

struct FeatureGroupInfo {
  FeatureGroupId id;
  FeatureOrigin origin = FeatureOrigin::KnowledgeDriven;
  std::string display_name;
};

class FeatureGroupCatalog {
 public:
  /// The 15 groups with their knowledge-/data-driven origin.
  static const FeatureGroupCatalog& builtin();

  /// Adds or replaces a group definition.
  void add(FeatureGroupInfo info);
  bool contains(const FeatureGroupId& id) const;
  const FeatureGroupInfo* find(const FeatureGroupId& id) const;
  /// Falls back to the raw id when the group is unknown.
  std::string display_name(const FeatureGroupId& id) const;
  std::vector<FeatureGroupId> ids() const;

 private:
  std::map<FeatureGroupId, FeatureGroupInfo> groups_;
};

// ---------------------------------------------------------------------------
// Features and records
// ---------------------------------------------------------------------------

enum class FeatureKind { StructuredNumeric, StructuredSeries, UnstructuredText };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view text);

struct SeriesPoint {
  std::int64_t t = 0;  // epoch seconds, UTC
  double v = 0.0;
  bool operator==(const SeriesPoint&) const = default;
};

using Series = std::vector<SeriesPoint>;
using FeatureData = std::variant<double, Series, std::string>;

struct FeatureValue {
  std::string dimension;
  FeatureKind kind = FeatureKind::StructuredNumeric;
  FeatureData value;
  std::string source;

  bool operator==(const FeatureValue&) const = default;

  const double* number() const { return std::get_if<double>(&value); }
  const Series* series() const { return std::get_if<Series>(&value); }
  const std::string* text() const { return std::get_if<std::string>(&value); }
};

struct TimeRange {
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool operator==(const TimeRange&) const = default;
};

using FeatureMap = std::map<FeatureGroupId, std::vector<FeatureValue>>;

struct AppRecord {
  std::string app_id;
  std::string app_name;
  std::string developer;
  std::string declared_category;
  TimeRange collected_at;
  FeatureMap features;

  bool operator==(const AppRecord&) const = default;

  const FeatureValue* find(const FeatureGroupId& group, std::string_view dimension) const;
  bool has_group(const FeatureGroupId& group) const;
};

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

enum class Producer { Agent, Statistic };

std::string_view to_string(Producer producer);
Producer producer_from_string(std::string_view text);

struct RawRef {
  std::string app_id;
  std::string dimension;
  std::string source;
  auto operator<=>(const RawRef&) const = default;
};

struct EvidenceSnippet {
  FeatureGroupId group;
  std::string dimension;
  std::string summary;
  std::vector<RawRef> raw_refs;
  std::vector<std::string> indicators;
  Producer producer = Producer::Agent;

  bool operator==(const EvidenceSnippet&) const = default;
};

/// Total order used wherever snippet collections must be order-independent.
bool snippet_less(const EvidenceSnippet& a, const EvidenceSnippet& b);

/// Lowercase ASCII letters/digits in hyphen-separated runs: "ad-pop-ups".
bool is_canonical_indicator(std::string_view token);

// ---------------------------------------------------------------------------
// Validation and partitioning
// ---------------------------------------------------------------------------

struct ValidationIssue {
  std::string field;
  std::string message;
  bool operator==(const ValidationIssue&) const = default;
};

std::vector<ValidationIssue> validate_app_record(const AppRecord& record);
/// Per-record issues plus batch-level app_id uniqueness.
std::vector<ValidationIssue> validate_batch(std::span<const AppRecord> records);

std::vector<ValidationIssue> validate_snippet(const EvidenceSnippet& snippet);

struct FeaturePartition {
  FeatureMap structured;
  FeatureMap unstructured;
};

FeaturePartition partition_features(const AppRecord& record);

}  // namespace apprisk
