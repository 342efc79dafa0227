#include <cctype>

#include "apprisk/core/schema.hpp"
#include "apprisk/llm/gateway.hpp"

namespace apprisk::llm {

const SchemaRegistry& SchemaRegistry::builtin() {
  static const SchemaRegistry registry = [] {
    SchemaRegistry r;
    r.add("feedback_verdict",
          json::parse(R"({
            "type": "object",
            "required": ["Quality", "Tendency", "RiskInfo"],
            "properties": {
              "Quality": {"enum": ["High", "Medium", "Low"]},
              "Tendency": {"enum": ["Negative", "Neutral", "Positive"]},
              "RiskInfo": {
                "type": "object",
                "required": ["Risk Factor"],
                "properties": {
                  "Snippets": {"type": ["string", "array"]},
                  "Risk Factor": {"type": "string"}
                }
              }
            }
          })"),
          json::parse(R"({
            "Quality": "High", "Tendency": "Negative",
            "RiskInfo": {"Snippets": "Ads pop up constantly. | Full-screen ads interrupt use.",
                         "Risk Factor": "Advertising-related"}
          })"));
    r.add("discrepancy_verdict",
          json::parse(R"({
            "type": "object",
            "required": ["Mismatch"],
            "properties": {
              "Mismatch": {"type": "boolean"},
              "DeclaredCategory": {"type": "string"},
              "ObservedTopics": {"type": "array", "items": {"type": "string"}},
              "Explanation": {"type": "string"}
            }
          })"),
          json::parse(R"({
            "Mismatch": true, "DeclaredCategory": "Tools",
            "ObservedTopics": ["game", "wallet"],
            "Explanation": "Feedback discusses games and wallet payments, unrelated to a tools app."
          })"));
    r.add("similar_pattern",
          json::parse(R"({
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "string"}}
          })"),
          json::parse(R"({"C17**21": ["anomalous-rank", "comment", "malicious-callee"]})"));
    return r;
  }();
  return registry;
}

void SchemaRegistry::add(const std::string& schema_id, json schema, json canonical_example) {
  entries_[schema_id] = Entry{std::move(schema), std::move(canonical_example)};
}

const json& SchemaRegistry::schema(const std::string& schema_id) const {
  auto it = entries_.find(schema_id);
  if (it == entries_.end()) throw Error("unknown output schema '" + schema_id + "'");
  return it->second.schema;
}

const json& SchemaRegistry::canonical_example(const std::string& schema_id) const {
  auto it = entries_.find(schema_id);
  if (it == entries_.end()) throw Error("unknown output schema '" + schema_id + "'");
  return it->second.example;
}

bool SchemaRegistry::contains(const std::string& schema_id) const {
  return entries_.count(schema_id) > 0;
}

std::vector<std::string> SchemaRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

namespace {

/// End index (exclusive) of the balanced object starting at `start`, or npos.
std::size_t balanced_end(const std::string& text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return c == '}' ? i + 1 : std::string::npos;
      if (depth < 0) return std::string::npos;
    }
  }
  return std::string::npos;
}

/// Escapes raw control characters inside string literals and drops trailing
/// commas before a closing bracket; small models emit both.
std::string repair(const std::string& candidate) {
  std::string out;
  out.reserve(candidate.size() + 16);
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const char c = candidate[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
        out += c;
      } else if (c == '\\') {
        escaped = true;
        out += c;
      } else if (c == '"') {
        in_string = false;
        out += c;
      } else if (c == '\n') {
        out += "\\n";
      } else if (c == '\r') {
        // dropped
      } else if (c == '\t') {
        out += "\\t";
      } else {
        out += c;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < candidate.size() && std::isspace(static_cast<unsigned char>(candidate[j]))) ++j;
      if (j < candidate.size() && (candidate[j] == '}' || candidate[j] == ']')) continue;
      out += c;
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

json parse_structured_output(const std::string& text, const std::string& schema_id,
                             const SchemaRegistry& registry) {
  const json& schema = registry.schema(schema_id);
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    const std::size_t end = balanced_end(text, start);
    if (end == std::string::npos) continue;
    json parsed = json::parse(repair(text.substr(start, end - start)), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    if (validate_against_schema(parsed, schema).empty()) return parsed;
  }
  throw MalformedOutputError("malformed output: no object matching schema '" + schema_id + "'");
}

StructuredCompletion complete_structured(Gateway& gateway, const CompletionRequest& request,
                                         const std::string& schema_id, const CallTag& tag,
                                         const SchemaRegistry& registry) {
  const Completion first = gateway.complete(request, tag);
  try {
    return {parse_structured_output(first.text, schema_id, registry), false};
  } catch (const MalformedOutputError&) {
  }
  CompletionRequest retry = request;
  retry.prompt += "\n\nYour previous answer could not be parsed. Reply with a single JSON object "
                  "shaped exactly like this example and nothing else:\n" +
                  registry.canonical_example(schema_id).dump();
  const Completion second = gateway.complete(retry, tag);
  return {parse_structured_output(second.text, schema_id, registry), true};
}

}  // namespace apprisk::llm
