#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apprisk/core/model.hpp"

namespace apprisk {

using json = nlohmann::json;

inline constexpr const char* kAppRecordSchemaVersion = "1.0";

void to_json(json& j, const FeatureGroupId& id);
void from_json(const json& j, FeatureGroupId& id);
void to_json(json& j, RiskCategory c);
void from_json(const json& j, RiskCategory& c);
void to_json(json& j, const SeriesPoint& p);
void from_json(const json& j, SeriesPoint& p);
void to_json(json& j, const FeatureValue& v);
void from_json(const json& j, FeatureValue& v);
void to_json(json& j, const TimeRange& r);
void from_json(const json& j, TimeRange& r);
void to_json(json& j, const AppRecord& r);
void from_json(const json& j, AppRecord& r);
void to_json(json& j, const RawRef& r);
void from_json(const json& j, RawRef& r);
void to_json(json& j, const EvidenceSnippet& s);
void from_json(const json& j, EvidenceSnippet& s);
void to_json(json& j, const ValidationIssue& i);

struct JsonlLineError {
  std::size_t line = 0;
  std::string message;
};

struct AppRecordStream {
  std::vector<AppRecord> records;
  std::vector<JsonlLineError> errors;
};

/// Reads one AppRecord per non-blank line. Malformed lines are reported, not thrown.
AppRecordStream read_app_records(std::istream& in);
AppRecordStream read_app_records_file(const std::string& path);
void write_app_record(std::ostream& out, const AppRecord& record);

/// Parses JSON that may carry // and /* */ comments (config documents).
json parse_json_with_comments(const std::string& text);
json load_json_file(const std::string& path);
std::string read_text_file(const std::string& path);

}  // namespace apprisk
