#include "apprisk/core/schema.hpp"

#include <cmath>
#include <regex>

namespace apprisk {

namespace {

class Validator {
 public:
  explicit Validator(const json& root) : root_(root) {}

  void check(const json& inst, const json& schema, const std::string& path) {
    if (schema.is_boolean()) {
      if (!schema.get<bool>()) fail(path, "no value allowed here");
      return;
    }
    if (!schema.is_object()) return;

    if (auto it = schema.find("$ref"); it != schema.end()) {
      check(inst, resolve(it->get<std::string>()), path);
      return;
    }
    if (auto it = schema.find("type"); it != schema.end() && !type_ok(inst, *it)) {
      fail(path, "expected type " + it->dump() + ", got " + type_name(inst));
      return;
    }
    if (auto it = schema.find("const"); it != schema.end() && inst != *it) {
      fail(path, "expected constant " + it->dump());
    }
    if (auto it = schema.find("enum"); it != schema.end()) {
      bool found = false;
      for (const auto& e : *it) found = found || e == inst;
      if (!found) fail(path, "value " + inst.dump() + " not in enum " + it->dump());
    }
    if (inst.is_string()) check_string(inst, schema, path);
    if (inst.is_number()) check_number(inst, schema, path);
    if (inst.is_object()) check_object(inst, schema, path);
    if (inst.is_array()) check_array(inst, schema, path);

    if (auto it = schema.find("anyOf"); it != schema.end()) {
      if (count_matching(inst, *it, path) == 0) fail(path, "matches none of anyOf");
    }
    if (auto it = schema.find("oneOf"); it != schema.end()) {
      const auto n = count_matching(inst, *it, path);
      if (n != 1) fail(path, "matches " + std::to_string(n) + " branches of oneOf");
    }
  }

  std::vector<std::string> take() { return std::move(errors_); }

 private:
  const json& resolve(const std::string& ref) {
    if (ref.rfind("#", 0) != 0) throw Error("only local schema references are supported: " + ref);
    const json::json_pointer ptr(ref.substr(1));
    if (!root_.contains(ptr)) throw Error("unresolvable schema reference " + ref);
    return root_.at(ptr);
  }

  static std::string type_name(const json& j) {
    if (j.is_null()) return "null";
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer() || j.is_number_unsigned()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    return "object";
  }

  static bool single_type_ok(const json& inst, const std::string& t) {
    if (t == "null") return inst.is_null();
    if (t == "boolean") return inst.is_boolean();
    if (t == "string") return inst.is_string();
    if (t == "array") return inst.is_array();
    if (t == "object") return inst.is_object();
    if (t == "number") return inst.is_number();
    if (t == "integer") {
      if (inst.is_number_integer() || inst.is_number_unsigned()) return true;
      if (inst.is_number_float()) {
        const double d = inst.get<double>();
        return std::isfinite(d) && std::floor(d) == d;
      }
      return false;
    }
    return false;
  }

  static bool type_ok(const json& inst, const json& type) {
    if (type.is_string()) return single_type_ok(inst, type.get<std::string>());
    for (const auto& t : type) {
      if (single_type_ok(inst, t.get<std::string>())) return true;
    }
    return false;
  }

  void check_string(const json& inst, const json& schema, const std::string& path) {
    const auto& s = inst.get_ref<const std::string&>();
    if (auto it = schema.find("minLength"); it != schema.end() && s.size() < it->get<std::size_t>()) {
      fail(path, "string shorter than " + it->dump());
    }
    if (auto it = schema.find("pattern"); it != schema.end()) {
      if (!std::regex_search(s, std::regex(it->get<std::string>()))) {
        fail(path, "string does not match pattern " + it->dump());
      }
    }
  }

  void check_number(const json& inst, const json& schema, const std::string& path) {
    const double d = inst.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && d < it->get<double>()) {
      fail(path, "value below minimum " + it->dump());
    }
    if (auto it = schema.find("maximum"); it != schema.end() && d > it->get<double>()) {
      fail(path, "value above maximum " + it->dump());
    }
  }

  void check_object(const json& inst, const json& schema, const std::string& path) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        if (!inst.contains(key.get<std::string>())) {
          fail(path, "missing required property '" + key.get<std::string>() + "'");
        }
      }
    }
    const auto props = schema.find("properties");
    const auto extra = schema.find("additionalProperties");
    for (const auto& [key, value] : inst.items()) {
      const std::string child = path + "/" + key;
      if (props != schema.end() && props->contains(key)) {
        check(value, props->at(key), child);
      } else if (extra != schema.end()) {
        check(value, *extra, child);
      }
    }
  }

  void check_array(const json& inst, const json& schema, const std::string& path) {
    if (auto it = schema.find("minItems"); it != schema.end() && inst.size() < it->get<std::size_t>()) {
      fail(path, "array shorter than " + it->dump());
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && inst.size() > it->get<std::size_t>()) {
      fail(path, "array longer than " + it->dump());
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < inst.size(); ++i) {
        check(inst[i], *it, path + "/" + std::to_string(i));
      }
    }
  }

  std::size_t count_matching(const json& inst, const json& branches, const std::string& path) {
    std::size_t n = 0;
    for (const auto& b : branches) {
      Validator sub(root_);
      sub.check(inst, b, path);
      if (sub.errors_.empty()) ++n;
    }
    return n;
  }

  void fail(const std::string& path, const std::string& msg) {
    errors_.push_back((path.empty() ? std::string("/") : path) + ": " + msg);
  }

  const json& root_;
  std::vector<std::string> errors_;
};

}  // namespace

std::vector<std::string> validate_against_schema(const json& instance, const json& schema) {
  Validator v(schema);
  v.check(instance, schema, "");
  return v.take();
}

std::vector<std::string> validate_against_def(const json& instance, const json& schema_doc, const std::string& def) {
  if (!schema_doc.contains("$defs") || !schema_doc["$defs"].contains(def)) throw Error("schema has no definition '" + def + "'");
  json wrapper = {{"$ref", "#/$defs/" + def}, {"$defs", schema_doc["$defs"]}};
  return validate_against_schema(instance, wrapper);
}

}  // namespace apprisk
