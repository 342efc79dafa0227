#include <algorithm>
#include <filesystem>
#include <sstream>

#include "apprisk/llm/gateway.hpp"

namespace apprisk::llm {

namespace {

constexpr std::string_view kFewShotSlot = "few_shot_examples";

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

/// Finds the next "{{name}}" at or after `from`. Returns npos when none.
std::size_t next_placeholder(const std::string& body, std::size_t from, std::string& name,
                             std::size_t& end) {
  for (std::size_t pos = body.find("{{", from); pos != std::string::npos;
       pos = body.find("{{", pos + 1)) {
    std::size_t i = pos + 2;
    while (i < body.size() && is_name_char(body[i])) ++i;
    if (i > pos + 2 && body.compare(i, 2, "}}") == 0) {
      name = body.substr(pos + 2, i - pos - 2);
      end = i + 2;
      return pos;
    }
  }
  return std::string::npos;
}

std::string render_examples(const std::vector<FewShotExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += "Example input:\n" + ex.input + "\nExample output:\n" + ex.output + "\n";
  }
  return out;
}

std::string trim_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

std::vector<std::string> placeholders(const std::string& body) {
  std::vector<std::string> names;
  std::string name;
  std::size_t end = 0;
  for (std::size_t pos = next_placeholder(body, 0, name, end); pos != std::string::npos;
       pos = next_placeholder(body, end, name, end)) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  return names;
}

std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& bindings) {
  std::string out;
  bool examples_placed = false;
  std::string name;
  std::size_t end = 0;
  std::size_t cursor = 0;
  for (std::size_t pos = next_placeholder(tmpl.body, 0, name, end); pos != std::string::npos;
       pos = next_placeholder(tmpl.body, end, name, end)) {
    out.append(tmpl.body, cursor, pos - cursor);
    if (name == kFewShotSlot) {
      out += render_examples(tmpl.few_shot_examples);
      examples_placed = true;
    } else {
      auto it = bindings.find(name);
      if (it == bindings.end()) {
        throw Error("template '" + tmpl.template_id + "': missing binding for placeholder '" +
                    name + "'");
      }
      out += it->second;
    }
    cursor = end;
  }
  out.append(tmpl.body, cursor, std::string::npos);
  if (!examples_placed && !tmpl.few_shot_examples.empty()) {
    out += "\n" + render_examples(tmpl.few_shot_examples);
  }
  return out;
}

PromptTemplate parse_prompt_asset(const std::string& text) {
  PromptTemplate tmpl;
  enum class Section { None, Body, ExampleInput, ExampleOutput } section = Section::None;
  std::string buffer;

  auto flush = [&] {
    const std::string content = trim_trailing_newlines(buffer);
    switch (section) {
      case Section::Body: tmpl.body = content; break;
      case Section::ExampleInput: tmpl.few_shot_examples.push_back({content, {}}); break;
      case Section::ExampleOutput:
        if (tmpl.few_shot_examples.empty() || !tmpl.few_shot_examples.back().output.empty()) {
          throw Error("@example-output without a preceding @example-input");
        }
        tmpl.few_shot_examples.back().output = content;
        break;
      case Section::None: break;
    }
    buffer.clear();
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("@template ", 0) == 0) {
      tmpl.template_id = line.substr(10);
    } else if (line.rfind("@output ", 0) == 0) {
      tmpl.expected_output = line.substr(8);
    } else if (line == "@body") {
      flush();
      section = Section::Body;
    } else if (line == "@example-input") {
      flush();
      section = Section::ExampleInput;
    } else if (line == "@example-output") {
      flush();
      section = Section::ExampleOutput;
    } else if (section == Section::None) {
      // header comments
    } else {
      buffer += line;
      buffer += '\n';
    }
  }
  flush();
  if (tmpl.template_id.empty()) throw Error("prompt asset without @template line");
  if (tmpl.body.empty()) throw Error("prompt asset '" + tmpl.template_id + "' has no body");
  return tmpl;
}

void PromptLibrary::add(PromptTemplate tmpl) {
  if (templates_.count(tmpl.template_id)) {
    throw Error("duplicate template id '" + tmpl.template_id + "'");
  }
  auto id = tmpl.template_id;
  templates_.emplace(std::move(id), std::move(tmpl));
}

PromptLibrary PromptLibrary::load_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("prompt directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".prompt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  PromptLibrary lib;
  for (const auto& f : files) lib.add(parse_prompt_asset(read_text_file(f.string())));
  return lib;
}

const PromptTemplate& PromptLibrary::get(const std::string& template_id) const {
  auto it = templates_.find(template_id);
  if (it == templates_.end()) throw Error("unknown prompt template '" + template_id + "'");
  return it->second;
}

bool PromptLibrary::contains(const std::string& template_id) const {
  return templates_.count(template_id) > 0;
}

std::vector<std::string> PromptLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

}  // namespace apprisk::llm
