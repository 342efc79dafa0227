#include "apprisk/core/json_io.hpp"

#include <fstream>
#include <sstream>

namespace apprisk {

void to_json(json& j, const FeatureGroupId& id) { j = id.name(); }
void from_json(const json& j, FeatureGroupId& id) { id = FeatureGroupId(j.get<std::string>()); }

void to_json(json& j, RiskCategory c) { j = std::string(to_string(c)); }
void from_json(const json& j, RiskCategory& c) { c = risk_category_from_string(j.get<std::string>()); }

void to_json(json& j, const SeriesPoint& p) { j = json::array({p.t, p.v}); }

void from_json(const json& j, SeriesPoint& p) {
  if (j.is_array() && j.size() == 2) {
    p.t = j.at(0).get<std::int64_t>();
    p.v = j.at(1).get<double>();
  } else if (j.is_object()) {
    p.t = j.at("t").get<std::int64_t>();
    p.v = j.at("v").get<double>();
  } else {
    throw Error("series point must be [t, v] or {\"t\":..,\"v\":..}");
  }
}

void to_json(json& j, const FeatureValue& v) {
  j = json{{"dimension", v.dimension}, {"kind", to_string(v.kind)}, {"source", v.source}};
  std::visit([&](const auto& x) { j["value"] = x; }, v.value);
}

void from_json(const json& j, FeatureValue& v) {
  v.dimension = j.at("dimension").get<std::string>();
  v.kind = feature_kind_from_string(j.at("kind").get<std::string>());
  v.source = j.value("source", std::string{});
  const auto& val = j.at("value");
  // The value keeps its own JSON shape; a kind/shape disagreement is a
  // validation issue, not a parse failure.
  if (val.is_number()) {
    v.value = val.get<double>();
  } else if (val.is_string()) {
    v.value = val.get<std::string>();
  } else if (val.is_array()) {
    v.value = val.get<Series>();
  } else {
    throw Error("feature '" + v.dimension + "' has unsupported value type");
  }
}

void to_json(json& j, const TimeRange& r) { j = json{{"start", r.start}, {"end", r.end}}; }

void from_json(const json& j, TimeRange& r) {
  r.start = j.at("start").get<std::int64_t>();
  r.end = j.at("end").get<std::int64_t>();
}

void to_json(json& j, const AppRecord& r) {
  json features = json::object();
  for (const auto& [group, values] : r.features) features[group.name()] = values;
  j = json{{"app_id", r.app_id},
           {"app_name", r.app_name},
           {"developer", r.developer},
           {"declared_category", r.declared_category},
           {"collected_at", r.collected_at},
           {"features", std::move(features)}};
}

void from_json(const json& j, AppRecord& r) {
  r.app_id = j.at("app_id").get<std::string>();
  r.app_name = j.value("app_name", std::string{});
  r.developer = j.value("developer", std::string{});
  r.declared_category = j.value("declared_category", std::string{});
  if (j.contains("collected_at")) r.collected_at = j.at("collected_at").get<TimeRange>();
  r.features.clear();
  if (j.contains("features")) {
    for (const auto& [group, values] : j.at("features").items()) {
      r.features[FeatureGroupId(group)] = values.get<std::vector<FeatureValue>>();
    }
  }
}

void to_json(json& j, const RawRef& r) {
  j = json{{"app_id", r.app_id}, {"dimension", r.dimension}, {"source", r.source}};
}

void from_json(const json& j, RawRef& r) {
  r.app_id = j.at("app_id").get<std::string>();
  r.dimension = j.at("dimension").get<std::string>();
  r.source = j.value("source", std::string{});
}

void to_json(json& j, const EvidenceSnippet& s) {
  j = json{{"group", s.group},
           {"dimension", s.dimension},
           {"summary", s.summary},
           {"raw_refs", s.raw_refs},
           {"indicators", s.indicators},
           {"producer", to_string(s.producer)}};
}

void from_json(const json& j, EvidenceSnippet& s) {
  s.group = j.at("group").get<FeatureGroupId>();
  s.dimension = j.value("dimension", std::string{});
  s.summary = j.value("summary", std::string{});
  s.raw_refs = j.value("raw_refs", std::vector<RawRef>{});
  s.indicators = j.value("indicators", std::vector<std::string>{});
  s.producer = producer_from_string(j.value("producer", std::string("agent")));
}

void to_json(json& j, const ValidationIssue& i) {
  j = json{{"field", i.field}, {"message", i.message}};
}

AppRecordStream read_app_records(std::istream& in) {
  AppRecordStream out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(json::parse(line).get<AppRecord>());
    } catch (const std::exception& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  return out;
}

AppRecordStream read_app_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_app_records(in);
}

void write_app_record(std::ostream& out, const AppRecord& record) {
  out << json(record).dump() << '\n';
}

json parse_json_with_comments(const std::string& text) {
  return json::parse(text, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json_file(const std::string& path) {
  try {
    return parse_json_with_comments(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace apprisk
