#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "apprisk/pipeline/pipeline.hpp"

namespace apprisk::service {

/// Everything needed to assemble an Engine. Relative paths resolve against `root`.
struct RuntimeConfig {
  std::filesystem::path root = ".";
  std::string tree_config = "config/tree.json";
  std::string history = "data/history/delisted_cases.jsonl";
  std::string tree_artifact;  // prebuilt tree; built from tree_config + history when empty
  std::string baselines = "config/baselines.json";
  std::string agents = "config/agents.json";
  std::string prompts_dir = "config/prompts";
  std::string aliases = "config/aliases.json";
  std::string mock_vocabulary = "config/mock_vocabulary.json";

  std::string backend = "mock";  // mock | remote
  llm::HttpBackendConfig llm;
  std::size_t max_in_flight = 4;

  std::string embedder = "hashing";  // hashing | remote
  std::size_t embedding_dim = 256;
  retrieval::RemoteEmbedderConfig remote_embedder;

  std::string index_dir;  // empty: in-memory index
  bool seed_index = true;  // append the history cases into an empty index

  pipeline::ValidationPolicy policy = pipeline::ValidationPolicy::Strict;
  pipeline::GateMode gate = pipeline::GateMode::Both;
  std::size_t top_k = retrieval::kDefaultTopK;
  double temperature = llm::kDefaultTemperature;
  std::size_t parallelism = 4;

  // Service settings.
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "var";
  std::string api_token_env = "APPRISK_API_TOKEN";

  std::filesystem::path resolve(const std::string& p) const;

  /// Unknown keys are rejected. `base` anchors a relative "root".
  static RuntimeConfig from_json(const json& doc, const std::filesystem::path& base = ".");
  static RuntimeConfig load(const std::string& path);
  json to_json() const;

  /// APPRISK_ROOT, APPRISK_PORT, APPRISK_HOST, APPRISK_DATA_DIR, APPRISK_BACKEND,
  /// APPRISK_LLM_URL, APPRISK_LLM_MODEL, APPRISK_POLICY, APPRISK_GATE, APPRISK_PARALLELISM.
  void apply_env();
};

/// Owns the engine's collaborators.
class Runtime {
 public:
  static std::unique_ptr<Runtime> create(const RuntimeConfig& config);

  const RuntimeConfig& config() const { return config_; }
  pipeline::Engine engine() const;

  tree::RiskTree tree;
  std::unique_ptr<retrieval::CaseIndex> index;
  std::unique_ptr<retrieval::Embedder> embedder;
  std::unique_ptr<llm::Gateway> gateway;
  llm::PromptLibrary prompts;
  stats::BaselineTable baselines;
  agents::AgentRegistry registry;
  retrieval::IndicatorNormalizer normalizer;

 private:
  RuntimeConfig config_;
};

/// Loads the tree artifact at `path`, or builds it from the config's sources.
tree::RiskTree load_or_build_tree(const RuntimeConfig& config, const retrieval::Embedder& embedder,
                                  const retrieval::IndicatorNormalizer& normalizer);

std::unique_ptr<retrieval::Embedder> make_embedder(const RuntimeConfig& config);

/// Appends every history case not yet present. Returns how many were added.
std::size_t seed_index(retrieval::CaseIndex& index, const std::string& history_path,
                       const retrieval::Embedder& embedder, const retrieval::IndicatorNormalizer& normalizer);

}  // namespace apprisk::service
