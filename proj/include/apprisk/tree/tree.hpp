#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/core/model.hpp"
#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::tree {

inline constexpr const char* kTreeSchemaVersion = "1";
inline constexpr double kDefaultMinWeight = 0.05;

struct Edge {
  FeatureGroupId group;
  RiskCategory category = RiskCategory::AdPopups;
  double weight = 0.0;
  bool operator==(const Edge&) const = default;
};

/// Feature group -> risk category association strengths mined from history.
class BipartiteMap {
 public:
  BipartiteMap() = default;
  explicit BipartiteMap(std::vector<Edge> edges);

  const std::vector<Edge>& edges() const { return edges_; }
  /// 0 when no edge exists.
  double weight(const FeatureGroupId& group, RiskCategory category) const;
  /// Edges of one category ordered by descending weight, ties by group id.
  std::vector<Edge> ranked(RiskCategory category) const;
  std::vector<FeatureGroupId> top_k(RiskCategory category, std::size_t k = 3) const;

  json to_json() const;
  static BipartiteMap from_json(const json& doc);

 private:
  std::vector<Edge> edges_;  // sorted by (category, group)
};

/// weight(g, r) = (#cases labeled r whose evidence includes g) / (#cases labeled r).
/// Zero-weight edges are omitted. Throws on empty history.
BipartiteMap build_bipartite_map(std::span<const retrieval::DelistedCase> history);

struct GroupNode {
  FeatureGroupId group;
  std::vector<std::string> leaves;
  double weight = 0.0;
  bool operator==(const GroupNode&) const = default;
};

struct CorroborationRule {
  std::string rule_id;
  std::vector<FeatureGroupId> required_groups;  // sorted, >= 2
  std::string description;
  std::string provenance;  // "paper-example" or "synthetic"
  bool operator==(const CorroborationRule&) const = default;
};

struct RiskNode {
  RiskCategory category = RiskCategory::AdPopups;
  std::vector<GroupNode> groups;
  std::vector<CorroborationRule> rules;

  bool has_group(const FeatureGroupId& g) const;
  bool operator==(const RiskNode&) const = default;
};

struct TreeProvenance {
  std::string config;
  std::string history_snapshot;
  bool operator==(const TreeProvenance&) const = default;
};

struct RiskTree {
  std::vector<RiskNode> roots;
  std::string version;
  TreeProvenance built_from;
  double min_weight = kDefaultMinWeight;

  const RiskNode* root(RiskCategory category) const;
  json to_json() const;
  static RiskTree from_json(const json& doc);
  bool operator==(const RiskTree&) const = default;
};

/// Removes groups whose weight is below `min_weight`, keeping at least the
/// single highest-weight group (ties by group id).
std::vector<GroupNode> prune_features(const BipartiteMap& map, RiskCategory category,
                                      std::vector<GroupNode> groups, double min_weight);

/// Builds the tree from a config document and a bipartite map. The version is
/// a content hash of both inputs.
RiskTree build_tree(const json& config, const BipartiteMap& map, TreeProvenance provenance = {});

/// Convenience for the CLI and service: config file + history case file.
RiskTree build_tree_from_files(const std::string& config_path, const std::string& history_path,
                               const retrieval::Embedder& embedder,
                               const retrieval::IndicatorNormalizer& normalizer);

struct CandidateRisk {
  RiskCategory category = RiskCategory::AdPopups;
  std::string satisfied_rule;
  /// Snippets from every group named by a satisfied rule, in snippet_less order.
  std::vector<EvidenceSnippet> snippets;
  bool operator==(const CandidateRisk&) const = default;
};

/// A root fires iff one of its rules has every required group represented by
/// at least one snippet. satisfied_rule is the first such rule in config order.
std::vector<CandidateRisk> evaluate(const RiskTree& tree, std::span<const EvidenceSnippet> snippets);

/// Distinct groups among the snippets.
std::vector<FeatureGroupId> groups_of(std::span<const EvidenceSnippet> snippets);

}  // namespace apprisk::tree
