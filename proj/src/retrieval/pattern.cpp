#include <set>

#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::retrieval {

namespace {

std::string indicator_list(const std::vector<std::string>& indicators) {
  return json(indicators).dump();
}

PatternMatch make_match(const ScoredCase& sc, std::vector<std::string> shared) {
  return PatternMatch{sc.item, std::move(shared), sc.similarity};
}

}  // namespace

std::vector<PatternMatch> rule_based_matches(const PatternTarget& target,
                                             const std::vector<ScoredCase>& candidates,
                                             const IndicatorNormalizer& normalizer) {
  const auto want = normalizer.normalize_all(target.indicators);
  std::vector<PatternMatch> out;
  for (const auto& sc : candidates) {
    auto shared = shared_indicators(want, normalizer.normalize_all(sc.item->indicators));
    if (shared.size() >= kMinSharedIndicators) out.push_back(make_match(sc, std::move(shared)));
  }
  return out;
}

PatternResult match_similar_pattern(const PatternTarget& target, const std::vector<ScoredCase>& candidates,
                                    llm::Gateway& gateway, const llm::PromptTemplate& prompt,
                                    const IndicatorNormalizer& normalizer, const llm::CallTag& tag,
                                    double temperature) {
  PatternResult result;
  if (candidates.empty()) return result;
  const auto want = normalizer.normalize_all(target.indicators);

  std::string records;
  std::set<std::string> listed;
  for (const auto& sc : candidates) {
    if (!listed.insert(sc.item->app_id).second) continue;
    if (!records.empty()) records += ",\n";
    records += json(sc.item->app_id).dump() + ": " +
               indicator_list(normalizer.normalize_all(sc.item->indicators));
  }
  const std::string target_line = json(target.app_id).dump() + ": " + indicator_list(want);

  json claims;
  try {
    llm::CompletionRequest req;
    req.prompt = llm::render_prompt(prompt, {{"records", records}, {"target", target_line}});
    req.temperature = temperature;
    claims = llm::complete_structured(gateway, req, prompt.expected_output.empty() ? "similar_pattern"
                                                                                   : prompt.expected_output,
                                      tag)
                 .value;
  } catch (const std::exception& e) {
    result.degraded = true;
    result.detail = e.what();
    result.matches = rule_based_matches(target, candidates, normalizer);
    return result;
  }

  std::set<std::string> kept;
  for (const auto& [id, _] : claims.items()) {
    ++result.claimed;
    const ScoredCase* hit = nullptr;
    for (const auto& sc : candidates) {
      if (sc.item->app_id == id) {
        hit = &sc;
        break;
      }
    }
    // The model only names candidates; their indicators come from the index, not the reply.
    if (!hit || kept.count(id)) {
      ++result.rejected;
      continue;
    }
    auto shared = shared_indicators(want, normalizer.normalize_all(hit->item->indicators));
    if (shared.size() < kMinSharedIndicators) {
      ++result.rejected;
      continue;
    }
    kept.insert(id);
    result.matches.push_back(make_match(*hit, std::move(shared)));
  }
  return result;
}

}  // namespace apprisk::retrieval
