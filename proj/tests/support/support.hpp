#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "apprisk/core/json_io.hpp"
#include "apprisk/service/runtime.hpp"

namespace apprisk::testing {

inline std::filesystem::path source_dir() { return APPRISK_SOURCE_DIR; }

inline AppRecord load_fixture(const std::string& name) {
  return load_json_file((source_dir() / "data" / "fixtures" / (name + ".json")).string()).get<AppRecord>();
}

inline std::vector<AppRecord> load_corpus() {
  auto s = read_app_records_file((source_dir() / "data" / "corpus" / "apps.jsonl").string());
  if (!s.errors.empty()) throw Error("corpus has malformed lines");
  return s.records;
}

/// Runtime over the bundled config and history with an in-memory index.
inline service::RuntimeConfig repo_config() {
  service::RuntimeConfig cfg;
  cfg.root = source_dir();
  return cfg;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto p = std::filesystem::temp_directory_path() /
           ("apprisk-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace apprisk::testing

namespace apprisk::testing {

/// One shared runtime over the repo config (read-only use).
inline service::Runtime& shared_runtime() {
  static auto rt = service::Runtime::create(repo_config());
  return *rt;
}

inline agents::AgentContext agent_context(service::Runtime& rt) {
  agents::AgentContext ctx;
  ctx.gateway = rt.gateway.get();
  ctx.prompts = &rt.prompts;
  ctx.baselines = &rt.baselines;
  ctx.registry = &rt.registry;
  ctx.normalizer = &rt.normalizer;
  for (const auto& c : rt.index->snapshot()->cases) ctx.delisted_ids.insert(c->app_id);
  return ctx;
}

}  // namespace apprisk::testing
