#pragma once

#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"

namespace apprisk {

/// Validates `instance` against a JSON Schema document. Supports the subset the
/// published schemas use: type, enum, const, required, properties,
/// additionalProperties, items, min/maxItems, minLength, minimum, maximum,
/// pattern, anyOf, oneOf and local "#/$defs/..." references.
///
/// Returns one message per violation, prefixed with the JSON pointer of the
/// offending value. Empty means valid.
std::vector<std::string> validate_against_schema(const json& instance, const json& schema);

/// Validates against `schema_doc["$defs"][def]`, resolving references in the document.
std::vector<std::string> validate_against_def(const json& instance, const json& schema_doc, const std::string& def);

}  // namespace apprisk
