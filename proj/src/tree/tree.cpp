#include "apprisk/tree/tree.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "apprisk/core/hash.hpp"

namespace apprisk::tree {

BipartiteMap::BipartiteMap(std::vector<Edge> edges) : edges_(std::move(edges)) {
  for (const auto& e : edges_) {
    if (!(e.weight >= 0.0)) throw Error("negative edge weight for " + e.group.name());
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.category, a.group) < std::tie(b.category, b.group);
  });
}

double BipartiteMap::weight(const FeatureGroupId& group, RiskCategory category) const {
  for (const auto& e : edges_) {
    if (e.category == category && e.group == group) return e.weight;
  }
  return 0.0;
}

std::vector<Edge> BipartiteMap::ranked(RiskCategory category) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.category == category) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.group < b.group;
  });
  return out;
}

std::vector<FeatureGroupId> BipartiteMap::top_k(RiskCategory category, std::size_t k) const {
  std::vector<FeatureGroupId> out;
  for (const auto& e : ranked(category)) {
    if (out.size() == k) break;
    out.push_back(e.group);
  }
  return out;
}

json BipartiteMap::to_json() const {
  json edges = json::array();
  for (const auto& e : edges_) {
    edges.push_back({{"group", e.group}, {"category", e.category}, {"weight", e.weight}});
  }
  return json{{"edges", edges}};
}

BipartiteMap BipartiteMap::from_json(const json& doc) {
  std::vector<Edge> edges;
  for (const auto& e : doc.at("edges")) {
    edges.push_back({e.at("group").get<FeatureGroupId>(), e.at("category").get<RiskCategory>(),
                     e.at("weight").get<double>()});
  }
  return BipartiteMap(std::move(edges));
}

BipartiteMap build_bipartite_map(std::span<const retrieval::DelistedCase> history) {
  if (history.empty()) throw Error("cannot build bipartite map from empty history");
  std::map<RiskCategory, std::size_t> cases;
  std::map<std::pair<RiskCategory, FeatureGroupId>, std::size_t> hits;
  for (const auto& c : history) {
    ++cases[c.risk_category];
    std::set<FeatureGroupId> seen(c.groups.begin(), c.groups.end());
    for (const auto& g : seen) ++hits[{c.risk_category, g}];
  }
  std::vector<Edge> edges;
  for (const auto& [key, n] : hits) {
    edges.push_back({key.second, key.first,
                     static_cast<double>(n) / static_cast<double>(cases.at(key.first))});
  }
  return BipartiteMap(std::move(edges));
}

bool RiskNode::has_group(const FeatureGroupId& g) const {
  return std::any_of(groups.begin(), groups.end(), [&](const GroupNode& n) { return n.group == g; });
}

const RiskNode* RiskTree::root(RiskCategory category) const {
  for (const auto& r : roots) {
    if (r.category == category) return &r;
  }
  return nullptr;
}

json RiskTree::to_json() const {
  json roots_json = json::array();
  for (const auto& r : roots) {
    json groups = json::array();
    for (const auto& g : r.groups) {
      groups.push_back({{"group", g.group}, {"weight", g.weight}, {"leaves", g.leaves}});
    }
    json rules = json::array();
    for (const auto& rule : r.rules) {
      rules.push_back({{"rule_id", rule.rule_id},
                       {"groups", rule.required_groups},
                       {"description", rule.description},
                       {"provenance", rule.provenance}});
    }
    roots_json.push_back({{"category", r.category}, {"groups", groups}, {"rules", rules}});
  }
  return json{{"schema_version", kTreeSchemaVersion},
              {"version", version},
              {"built_from", {{"config", built_from.config}, {"history_snapshot", built_from.history_snapshot}}},
              {"min_weight", min_weight},
              {"roots", roots_json}};
}

RiskTree RiskTree::from_json(const json& doc) {
  if (doc.value("schema_version", std::string{}) != kTreeSchemaVersion) {
    throw Error("tree artifact: unsupported schema_version " + doc.value("schema_version", std::string("<none>")));
  }
  RiskTree t;
  t.version = doc.at("version").get<std::string>();
  t.min_weight = doc.value("min_weight", kDefaultMinWeight);
  if (auto it = doc.find("built_from"); it != doc.end()) {
    t.built_from.config = it->value("config", std::string{});
    t.built_from.history_snapshot = it->value("history_snapshot", std::string{});
  }
  for (const auto& r : doc.at("roots")) {
    RiskNode node;
    node.category = r.at("category").get<RiskCategory>();
    for (const auto& g : r.at("groups")) {
      node.groups.push_back({g.at("group").get<FeatureGroupId>(),
                             g.at("leaves").get<std::vector<std::string>>(), g.at("weight").get<double>()});
    }
    for (const auto& rule : r.at("rules")) {
      node.rules.push_back({rule.at("rule_id").get<std::string>(),
                            rule.at("groups").get<std::vector<FeatureGroupId>>(),
                            rule.value("description", std::string{}), rule.value("provenance", std::string{})});
    }
    t.roots.push_back(std::move(node));
  }
  return t;
}

std::vector<GroupNode> prune_features(const BipartiteMap& map, RiskCategory category,
                                      std::vector<GroupNode> groups, double min_weight) {
  if (min_weight < 0.0) throw Error("min_weight must be >= 0");
  if (groups.empty()) return groups;
  std::vector<GroupNode> kept;
  for (const auto& g : groups) {
    if (map.weight(g.group, category) >= min_weight) kept.push_back(g);
  }
  if (kept.empty()) {
    auto best = std::min_element(groups.begin(), groups.end(), [&](const GroupNode& a, const GroupNode& b) {
      const double wa = map.weight(a.group, category);
      const double wb = map.weight(b.group, category);
      if (wa != wb) return wa > wb;
      return a.group < b.group;
    });
    kept.push_back(*best);
  }
  return kept;
}

RiskTree build_tree(const json& config, const BipartiteMap& map, TreeProvenance provenance) {
  const std::string schema = config.value("schema_version", std::string("<none>"));
  if (schema != kTreeSchemaVersion) throw Error("tree config: unsupported schema_version " + schema);

  RiskTree tree;
  tree.min_weight = config.value("min_weight", kDefaultMinWeight);
  tree.built_from = std::move(provenance);

  std::map<FeatureGroupId, std::vector<std::string>> leaves;
  std::map<std::string, FeatureGroupId> owner;
  for (const auto& [group, dims] : config.at("leaves").items()) {
    const FeatureGroupId g{group};
    for (const auto& d : dims) {
      const auto dim = d.get<std::string>();
      auto [it, inserted] = owner.emplace(dim, g);
      if (!inserted) {
        throw Error("tree config: leaf '" + dim + "' listed under both " + it->second.name() + " and " + group);
      }
      leaves[g].push_back(dim);
    }
    if (leaves[g].empty()) throw Error("tree config: group " + group + " has no leaves");
  }

  std::set<RiskCategory> seen;
  for (const auto& r : config.at("roots")) {
    RiskNode node;
    node.category = r.at("category").get<RiskCategory>();
    if (!seen.insert(node.category).second) {
      throw Error("tree config: duplicate root " + std::string(to_string(node.category)));
    }

    std::optional<std::set<FeatureGroupId>> allowed;
    if (r.contains("groups")) allowed = r.at("groups").get<std::set<FeatureGroupId>>();
    for (const auto& e : map.ranked(node.category)) {
      if (allowed && !allowed->count(e.group)) continue;
      auto it = leaves.find(e.group);
      if (it == leaves.end()) {
        throw Error("tree config: group " + e.group.name() + " has no leaf dimensions");
      }
      node.groups.push_back({e.group, it->second, e.weight});
    }
    if (node.groups.empty()) {
      throw Error("tree config: root " + std::string(to_string(node.category)) + " has no groups");
    }
    node.groups = prune_features(map, node.category, std::move(node.groups), tree.min_weight);

    for (const auto& rule : r.at("rules")) {
      CorroborationRule cr;
      cr.rule_id = rule.at("rule_id").get<std::string>();
      cr.required_groups = rule.at("groups").get<std::vector<FeatureGroupId>>();
      cr.description = rule.value("description", std::string{});
      cr.provenance = rule.value("provenance", std::string("synthetic"));
      std::sort(cr.required_groups.begin(), cr.required_groups.end());
      cr.required_groups.erase(std::unique(cr.required_groups.begin(), cr.required_groups.end()),
                               cr.required_groups.end());
      if (cr.required_groups.size() < 2) {
        throw Error("tree config: rule " + cr.rule_id + " needs at least two distinct groups");
      }
      for (const auto& g : cr.required_groups) {
        if (!node.has_group(g)) {
          throw Error("tree config: rule " + cr.rule_id + " references group " + g.name() +
                      " absent from root " + std::string(to_string(node.category)));
        }
      }
      node.rules.push_back(std::move(cr));
    }
    if (node.rules.empty()) {
      throw Error("tree config: root " + std::string(to_string(node.category)) + " has no rules");
    }
    tree.roots.push_back(std::move(node));
  }
  std::sort(tree.roots.begin(), tree.roots.end(),
            [](const RiskNode& a, const RiskNode& b) { return a.category < b.category; });

  std::uint64_t h = fnv1a64(config.dump());
  h = fnv1a64(map.to_json().dump(), h);
  tree.version = hex64(h);
  return tree;
}

RiskTree build_tree_from_files(const std::string& config_path, const std::string& history_path,
                               const retrieval::Embedder& embedder,
                               const retrieval::IndicatorNormalizer& normalizer) {
  const json config = load_json_file(config_path);
  const auto history = retrieval::load_cases_jsonl(history_path, embedder, normalizer);
  const std::string history_text = read_text_file(history_path);
  TreeProvenance prov{config_path, "fnv64:" + hex64(fnv1a64(history_text))};
  return build_tree(config, build_bipartite_map(history), prov);
}

std::vector<FeatureGroupId> groups_of(std::span<const EvidenceSnippet> snippets) {
  std::set<FeatureGroupId> s;
  for (const auto& sn : snippets) s.insert(sn.group);
  return {s.begin(), s.end()};
}

std::vector<CandidateRisk> evaluate(const RiskTree& tree, std::span<const EvidenceSnippet> snippets) {
  std::set<FeatureGroupId> present;
  for (const auto& s : snippets) present.insert(s.group);

  std::vector<CandidateRisk> out;
  for (const auto& root : tree.roots) {
    std::set<FeatureGroupId> contributing;
    std::string first;
    for (const auto& rule : root.rules) {
      const bool ok = std::all_of(rule.required_groups.begin(), rule.required_groups.end(),
                                  [&](const FeatureGroupId& g) { return present.count(g) > 0; });
      if (!ok) continue;
      if (first.empty()) first = rule.rule_id;
      contributing.insert(rule.required_groups.begin(), rule.required_groups.end());
    }
    if (first.empty()) continue;
    CandidateRisk c;
    c.category = root.category;
    c.satisfied_rule = first;
    for (const auto& s : snippets) {
      if (contributing.count(s.group)) c.snippets.push_back(s);
    }
    std::sort(c.snippets.begin(), c.snippets.end(), snippet_less);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace apprisk::tree
