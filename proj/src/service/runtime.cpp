#include "apprisk/service/runtime.hpp"

#include <cstdlib>
#include <set>

namespace apprisk::service {

namespace fs = std::filesystem;

fs::path RuntimeConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

RuntimeConfig RuntimeConfig::from_json(const json& doc, const fs::path& base) {
  static const std::set<std::string> kKeys = {
      "root",        "tree_config",  "history",        "tree_artifact", "baselines",   "agents",
      "prompts_dir", "aliases",      "mock_vocabulary", "backend",       "llm",         "max_in_flight",
      "embedder",    "embedding_dim", "remote_embedder", "index_dir",     "seed_index",  "policy",
      "gate",        "top_k",        "temperature",    "parallelism",   "host",        "port",
      "data_dir",    "api_token_env", "schema_version"};
  if (!doc.is_object()) throw Error("runtime config must be an object");
  for (const auto& [k, _] : doc.items()) {
    if (!kKeys.count(k)) throw Error("runtime config: unknown key '" + k + "'");
  }
  RuntimeConfig c;
  c.root = (base / doc.value("root", std::string("."))).lexically_normal();
  auto str = [&](const char* key, std::string& out) { out = doc.value(key, out); };
  str("tree_config", c.tree_config);
  str("history", c.history);
  str("tree_artifact", c.tree_artifact);
  str("baselines", c.baselines);
  str("agents", c.agents);
  str("prompts_dir", c.prompts_dir);
  str("aliases", c.aliases);
  str("mock_vocabulary", c.mock_vocabulary);
  str("backend", c.backend);
  str("embedder", c.embedder);
  str("index_dir", c.index_dir);
  str("host", c.host);
  str("data_dir", c.data_dir);
  str("api_token_env", c.api_token_env);
  c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
  c.embedding_dim = doc.value("embedding_dim", c.embedding_dim);
  c.seed_index = doc.value("seed_index", c.seed_index);
  c.top_k = doc.value("top_k", c.top_k);
  c.temperature = doc.value("temperature", c.temperature);
  c.parallelism = doc.value("parallelism", c.parallelism);
  c.port = doc.value("port", c.port);
  if (doc.contains("policy")) c.policy = pipeline::validation_policy_from_string(doc["policy"].get<std::string>());
  if (doc.contains("gate")) c.gate = pipeline::gate_mode_from_string(doc["gate"].get<std::string>());
  if (doc.contains("llm")) {
    const auto& l = doc["llm"];
    c.llm.base_url = l.value("base_url", c.llm.base_url);
    c.llm.model = l.value("model", c.llm.model);
    c.llm.token_env = l.value("token_env", c.llm.token_env);
    c.llm.timeout_seconds = l.value("timeout_seconds", c.llm.timeout_seconds);
  }
  if (doc.contains("remote_embedder")) {
    const auto& e = doc["remote_embedder"];
    c.remote_embedder.base_url = e.value("base_url", c.remote_embedder.base_url);
    c.remote_embedder.model = e.value("model", c.remote_embedder.model);
    c.remote_embedder.token_env = e.value("token_env", c.remote_embedder.token_env);
    c.remote_embedder.dim = e.value("dim", c.remote_embedder.dim);
    c.remote_embedder.timeout_seconds = e.value("timeout_seconds", c.remote_embedder.timeout_seconds);
  }
  if (c.backend != "mock" && c.backend != "remote") throw Error("backend must be mock or remote");
  if (c.embedder != "hashing" && c.embedder != "remote") throw Error("embedder must be hashing or remote");
  if (c.parallelism == 0) throw Error("parallelism must be at least 1");
  return c;
}

RuntimeConfig RuntimeConfig::load(const std::string& path) {
  return from_json(load_json_file(path), fs::absolute(path).parent_path());
}

json RuntimeConfig::to_json() const {
  return json{{"root", root.string()},
              {"tree_config", tree_config},
              {"history", history},
              {"tree_artifact", tree_artifact},
              {"baselines", baselines},
              {"agents", agents},
              {"prompts_dir", prompts_dir},
              {"aliases", aliases},
              {"mock_vocabulary", mock_vocabulary},
              {"backend", backend},
              {"llm", {{"base_url", llm.base_url}, {"model", llm.model}, {"token_env", llm.token_env}}},
              {"embedder", embedder},
              {"embedding_dim", embedder == "remote" ? remote_embedder.dim : embedding_dim},
              {"index_dir", index_dir},
              {"policy", pipeline::to_string(policy)},
              {"gate", pipeline::to_string(gate)},
              {"top_k", top_k},
              {"temperature", temperature},
              {"parallelism", parallelism},
              {"host", host},
              {"port", port},
              {"data_dir", data_dir}};
}

void RuntimeConfig::apply_env() {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
  };
  if (auto v = env("APPRISK_ROOT")) root = v;
  if (auto v = env("APPRISK_PORT")) port = std::stoi(v);
  if (auto v = env("APPRISK_HOST")) host = v;
  if (auto v = env("APPRISK_DATA_DIR")) data_dir = v;
  if (auto v = env("APPRISK_BACKEND")) backend = v;
  if (auto v = env("APPRISK_LLM_URL")) llm.base_url = v;
  if (auto v = env("APPRISK_LLM_MODEL")) llm.model = v;
  if (auto v = env("APPRISK_POLICY")) policy = pipeline::validation_policy_from_string(v);
  if (auto v = env("APPRISK_GATE")) gate = pipeline::gate_mode_from_string(v);
  if (auto v = env("APPRISK_PARALLELISM")) parallelism = std::stoul(v);
}

std::unique_ptr<retrieval::Embedder> make_embedder(const RuntimeConfig& config) {
  if (config.embedder == "remote") return std::make_unique<retrieval::RemoteEmbedder>(config.remote_embedder);
  return std::make_unique<retrieval::HashingEmbedder>(config.embedding_dim);
}

tree::RiskTree load_or_build_tree(const RuntimeConfig& config, const retrieval::Embedder& embedder,
                                  const retrieval::IndicatorNormalizer& normalizer) {
  if (!config.tree_artifact.empty()) {
    return tree::RiskTree::from_json(load_json_file(config.resolve(config.tree_artifact).string()));
  }
  return tree::build_tree_from_files(config.resolve(config.tree_config).string(),
                                     config.resolve(config.history).string(), embedder, normalizer);
}

std::size_t seed_index(retrieval::CaseIndex& index, const std::string& history_path,
                       const retrieval::Embedder& embedder, const retrieval::IndicatorNormalizer& normalizer) {
  std::size_t added = 0;
  for (auto& c : retrieval::load_cases_jsonl(history_path, embedder, normalizer)) {
    if (index.contains(c.app_id, c.risk_category)) continue;
    index.append(std::move(c));
    ++added;
  }
  return added;
}

std::unique_ptr<Runtime> Runtime::create(const RuntimeConfig& config) {
  auto rt = std::unique_ptr<Runtime>(new Runtime());
  rt->config_ = config;
  rt->normalizer = config.aliases.empty() ? retrieval::IndicatorNormalizer::defaults()
                                          : retrieval::IndicatorNormalizer::load(config.resolve(config.aliases).string());
  rt->embedder = make_embedder(config);
  rt->tree = load_or_build_tree(config, *rt->embedder, rt->normalizer);
  rt->baselines = stats::BaselineTable::load(config.resolve(config.baselines).string());
  rt->registry = agents::AgentRegistry::load(config.resolve(config.agents).string());
  rt->prompts = llm::PromptLibrary::load_directory(config.resolve(config.prompts_dir).string());

  rt->index = config.index_dir.empty()
                  ? std::make_unique<retrieval::CaseIndex>(rt->embedder->dim())
                  : retrieval::CaseIndex::open(config.resolve(config.index_dir), rt->embedder->dim());
  if (config.seed_index && rt->index->size() == 0) {
    seed_index(*rt->index, config.resolve(config.history).string(), *rt->embedder, rt->normalizer);
  }

  llm::GatewayOptions options;
  options.max_in_flight = config.max_in_flight;
  rt->gateway = std::make_unique<llm::Gateway>(options);
  const auto vocab_path = config.mock_vocabulary.empty() ? fs::path{} : config.resolve(config.mock_vocabulary);
  auto vocab = !vocab_path.empty() && fs::exists(vocab_path) ? llm::MockVocabulary::from_json(load_json_file(vocab_path.string()))
                                                               : llm::MockVocabulary::defaults();
  rt->gateway->register_backend("mock", llm::make_rule_backed_mock(std::move(vocab)));
  if (config.backend == "remote") rt->gateway->register_backend("remote", std::make_shared<llm::HttpBackend>(config.llm));
  rt->gateway->set_default_backend(config.backend);
  return rt;
}

pipeline::Engine Runtime::engine() const {
  pipeline::Engine e;
  e.tree = &tree;
  e.index = index.get();
  e.embedder = embedder.get();
  e.gateway = gateway.get();
  e.prompts = &prompts;
  e.baselines = &baselines;
  e.registry = &registry;
  e.normalizer = &normalizer;
  e.policy = config_.policy;
  e.gate = config_.gate;
  e.top_k = config_.top_k;
  e.temperature = config_.temperature;
  return e;
}

}  // namespace apprisk::service
