#include "apprisk/core/model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <tuple>

namespace apprisk {

namespace {

struct CategoryNames {
  RiskCategory category;
  std::string_view id;
  std::string_view display;
};

constexpr std::array<CategoryNames, 8> kCategoryNames = {{
    {RiskCategory::AdPopups, "AdPopups", "Ad Pop-ups"},
    {RiskCategory::UnexpectedPopups, "UnexpectedPopups", "Unexpected Pop-ups"},
    {RiskCategory::Retention, "Retention", "Retention"},
    {RiskCategory::AppMorphing, "AppMorphing", "App Morphing"},
    {RiskCategory::IllegalFeatures, "IllegalFeatures", "Illegal Features"},
    {RiskCategory::ContentRisk, "ContentRisk", "Content Risk"},
    {RiskCategory::AppCounterfeiting, "AppCounterfeiting", "App Counterfeiting"},
    {RiskCategory::Malware, "Malware", "Malware"},
}};

const CategoryNames& names_of(RiskCategory c) {
  for (const auto& n : kCategoryNames) {
    if (n.category == c) return n;
  }
  throw Error("invalid risk category value");
}

}  // namespace

std::string_view to_string(RiskCategory category) { return names_of(category).id; }

std::string_view display_name(RiskCategory category) { return names_of(category).display; }

std::optional<RiskCategory> parse_risk_category(std::string_view text) {
  for (const auto& n : kCategoryNames) {
    if (n.id == text) return n.category;
  }
  return std::nullopt;
}

RiskCategory risk_category_from_string(std::string_view text) {
  if (auto c = parse_risk_category(text)) return *c;
  throw Error("unknown risk category '" + std::string(text) + "'");
}

std::string_view to_string(FeatureOrigin origin) {
  return origin == FeatureOrigin::KnowledgeDriven ? "knowledge_driven" : "data_driven";
}

FeatureOrigin feature_origin_from_string(std::string_view text) {
  if (text == "knowledge_driven") return FeatureOrigin::KnowledgeDriven;
  if (text == "data_driven") return FeatureOrigin::DataDriven;
  throw Error("unknown feature origin '" + std::string(text) + "'");
}

const FeatureGroupCatalog& FeatureGroupCatalog::builtin() {
  static const FeatureGroupCatalog catalog = [] {
    FeatureGroupCatalog c;
    const auto kd = FeatureOrigin::KnowledgeDriven;
    const auto dd = FeatureOrigin::DataDriven;
    c.add({groups::Blacklist, kd, "Blacklist"});
    c.add({groups::RuntimeMonitor, kd, "Runtime Monitor"});
    c.add({groups::AppDistribution, kd, "App Distribution"});
    c.add({groups::UserFeedback, kd, "User Feedback"});
    c.add({groups::Discrepancy, kd, "Discrepancy"});
    c.add({groups::Screenshot, kd, "Screenshot"});
    c.add({groups::AppSimilarity, kd, "App Similarity"});
    c.add({groups::NetworkFeature, kd, "Network Feature"});
    c.add({groups::AntiVirusEngine, kd, "Anti-virus Engine"});
    c.add({groups::ExecutionPatterns, dd, "Execution Patterns"});
    c.add({groups::UsagePatterns, dd, "Usage Patterns"});
    c.add({groups::StaticAnalysis, dd, "Static Analysis"});
    c.add({groups::DynamicLoad, dd, "Dynamic Load"});
    c.add({groups::StoreMetadata, dd, "Store Metadata"});
    c.add({groups::UpdateFrequency, dd, "Update Frequency"});
    return c;
  }();
  return catalog;
}

void FeatureGroupCatalog::add(FeatureGroupInfo info) {
  if (info.id.empty()) throw Error("feature group id must be non-empty");
  if (info.display_name.empty()) info.display_name = info.id.name();
  groups_[info.id] = std::move(info);
}

bool FeatureGroupCatalog::contains(const FeatureGroupId& id) const { return groups_.count(id) > 0; }

const FeatureGroupInfo* FeatureGroupCatalog::find(const FeatureGroupId& id) const {
  auto it = groups_.find(id);
  return it == groups_.end() ? nullptr : &it->second;
}

std::string FeatureGroupCatalog::display_name(const FeatureGroupId& id) const {
  const auto* info = find(id);
  return info ? info->display_name : id.name();
}

std::vector<FeatureGroupId> FeatureGroupCatalog::ids() const {
  std::vector<FeatureGroupId> out;
  out.reserve(groups_.size());
  for (const auto& [id, _] : groups_) out.push_back(id);
  return out;
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::StructuredNumeric: return "structured_numeric";
    case FeatureKind::StructuredSeries: return "structured_series";
    case FeatureKind::UnstructuredText: return "unstructured_text";
  }
  return "?";
}

FeatureKind feature_kind_from_string(std::string_view text) {
  if (text == "structured_numeric") return FeatureKind::StructuredNumeric;
  if (text == "structured_series") return FeatureKind::StructuredSeries;
  if (text == "unstructured_text") return FeatureKind::UnstructuredText;
  throw Error("unknown feature kind '" + std::string(text) + "'");
}

std::string_view to_string(Producer producer) {
  return producer == Producer::Agent ? "agent" : "statistic";
}

Producer producer_from_string(std::string_view text) {
  if (text == "agent") return Producer::Agent;
  if (text == "statistic") return Producer::Statistic;
  throw Error("unknown producer '" + std::string(text) + "'");
}

const FeatureValue* AppRecord::find(const FeatureGroupId& group, std::string_view dimension) const {
  auto it = features.find(group);
  if (it == features.end()) return nullptr;
  for (const auto& fv : it->second) {
    if (fv.dimension == dimension) return &fv;
  }
  return nullptr;
}

bool AppRecord::has_group(const FeatureGroupId& group) const {
  auto it = features.find(group);
  return it != features.end() && !it->second.empty();
}

bool snippet_less(const EvidenceSnippet& a, const EvidenceSnippet& b) {
  return std::tie(a.group, a.dimension, a.summary, a.indicators, a.raw_refs, a.producer) <
         std::tie(b.group, b.dimension, b.summary, b.indicators, b.raw_refs, b.producer);
}

bool is_canonical_indicator(std::string_view token) {
  if (token.empty() || token.front() == '-' || token.back() == '-') return false;
  char prev = '\0';
  for (char ch : token) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '-';
    if (!ok) return false;
    if (ch == '-' && prev == '-') return false;
    prev = ch;
  }
  return true;
}

namespace {

bool kind_matches(const FeatureValue& fv) {
  switch (fv.kind) {
    case FeatureKind::StructuredNumeric: return fv.number() != nullptr;
    case FeatureKind::StructuredSeries: return fv.series() != nullptr;
    case FeatureKind::UnstructuredText: return fv.text() != nullptr;
  }
  return false;
}

}  // namespace

std::vector<ValidationIssue> validate_app_record(const AppRecord& record) {
  std::vector<ValidationIssue> issues;
  if (record.app_id.empty()) issues.push_back({"app_id", "app_id empty"});
  if (record.collected_at.end < record.collected_at.start) {
    issues.push_back({"collected_at", "collected_at ends before it starts"});
  }

  std::set<std::string> seen_dimensions;
  for (const auto& [group, values] : record.features) {
    if (group.empty()) issues.push_back({"features", "empty feature group id"});
    for (const auto& fv : values) {
      const std::string field = "features." + group.name() + "." + fv.dimension;
      if (fv.dimension.empty()) {
        issues.push_back({"features." + group.name(), "feature dimension empty"});
        continue;
      }
      if (!seen_dimensions.insert(fv.dimension).second) {
        issues.push_back({field, "dimension '" + fv.dimension + "' appears in more than one place"});
      }
      if (!kind_matches(fv)) {
        issues.push_back({field, "kind " + std::string(to_string(fv.kind)) +
                                     " does not match value representation"});
        continue;
      }
      if (const auto* s = fv.series()) {
        for (std::size_t i = 1; i < s->size(); ++i) {
          if ((*s)[i].t <= (*s)[i - 1].t) {
            issues.push_back({field, "series '" + fv.dimension +
                                         "' timestamps not strictly increasing at index " +
                                         std::to_string(i)});
            break;
          }
        }
      }
    }
  }
  return issues;
}

std::vector<ValidationIssue> validate_batch(std::span<const AppRecord> records) {
  std::vector<ValidationIssue> issues;
  std::set<std::string> ids;
  for (const auto& r : records) {
    for (auto& issue : validate_app_record(r)) {
      issue.field = (r.app_id.empty() ? std::string("<no id>") : r.app_id) + ":" + issue.field;
      issues.push_back(std::move(issue));
    }
    if (!r.app_id.empty() && !ids.insert(r.app_id).second) {
      issues.push_back({r.app_id + ":app_id", "duplicate app_id '" + r.app_id + "' in batch"});
    }
  }
  return issues;
}

std::vector<ValidationIssue> validate_snippet(const EvidenceSnippet& snippet) {
  std::vector<ValidationIssue> issues;
  if (snippet.group.empty()) issues.push_back({"group", "snippet group empty"});
  if (snippet.raw_refs.empty()) issues.push_back({"raw_refs", "snippet has no provenance"});
  for (const auto& ind : snippet.indicators) {
    if (!is_canonical_indicator(ind)) {
      issues.push_back({"indicators", "indicator '" + ind + "' is not canonical"});
    }
  }
  return issues;
}

FeaturePartition partition_features(const AppRecord& record) {
  FeaturePartition out;
  for (const auto& [group, values] : record.features) {
    for (const auto& fv : values) {
      auto& side = fv.kind == FeatureKind::UnstructuredText ? out.unstructured : out.structured;
      side[group].push_back(fv);
    }
  }
  return out;
}

}  // namespace apprisk
