#include <algorithm>
#include <cctype>
#include <set>

#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::retrieval {

std::string canonical_form(const std::string& raw) {
  std::string out;
  bool pending_gap = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_gap = !out.empty();
      continue;
    }
    if (pending_gap) {
      if (out.back() != '-' && c != '-') out += '-';
      pending_gap = false;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

IndicatorNormalizer IndicatorNormalizer::defaults() {
  IndicatorNormalizer n;
  n.add_alias("malicious-call-callee", "malicious-callee");
  return n;
}

IndicatorNormalizer IndicatorNormalizer::from_json(const json& doc) {
  if (doc.value("schema_version", std::string{}) != "1") {
    throw Error("alias table: unsupported schema_version");
  }
  IndicatorNormalizer n;
  for (const auto& [from, to] : doc.at("aliases").items()) n.add_alias(from, to.get<std::string>());
  return n;
}

IndicatorNormalizer IndicatorNormalizer::load(const std::string& path) {
  return from_json(load_json_file(path));
}

void IndicatorNormalizer::add_alias(const std::string& from, const std::string& to) {
  const std::string f = canonical_form(from);
  std::string t = canonical_form(to);
  if (f.empty() || t.empty()) throw Error("alias with empty side");
  if (auto it = aliases_.find(t); it != aliases_.end()) t = it->second;
  if (t == f) throw Error("alias cycle through '" + f + "'");
  aliases_[f] = t;
  // Entries that pointed at `f` now resolve straight to `t`.
  for (auto& [k, v] : aliases_) {
    if (v == f) v = t;
  }
}

std::string IndicatorNormalizer::normalize(const std::string& raw) const {
  std::string c = canonical_form(raw);
  if (auto it = aliases_.find(c); it != aliases_.end()) return it->second;
  return c;
}

std::vector<std::string> IndicatorNormalizer::normalize_all(const std::vector<std::string>& raw) const {
  std::set<std::string> out;
  for (const auto& r : raw) {
    auto n = normalize(r);
    if (!n.empty()) out.insert(std::move(n));
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> shared_indicators(const std::vector<std::string>& a,
                                           const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end());
  std::set<std::string> sb(b.begin(), b.end());
  std::vector<std::string> out;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
  return out;
}

}  // namespace apprisk::retrieval
