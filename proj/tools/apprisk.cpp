// apprisk: offline builds, batch analysis, the HTTP service and index upkeep.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "apprisk/core/hash.hpp"
#include "apprisk/service/server.hpp"

using namespace apprisk;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string root;
  std::string backend;
  std::string policy;
  std::string gate;
  std::size_t parallelism = 0;
  std::string index_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "runtime config (JSON); defaults to built-in paths under --root");
  cmd->add_option("--root", c.root, "directory that relative config paths resolve against");
}

service::RuntimeConfig load_config(const Common& c) {
  service::RuntimeConfig cfg = c.config.empty() ? service::RuntimeConfig{} : service::RuntimeConfig::load(c.config);
  cfg.apply_env();
  if (!c.root.empty()) cfg.root = c.root;
  if (!c.backend.empty()) cfg.backend = c.backend;
  if (!c.policy.empty()) cfg.policy = pipeline::validation_policy_from_string(c.policy);
  if (!c.gate.empty()) cfg.gate = pipeline::gate_mode_from_string(c.gate);
  if (c.parallelism > 0) cfg.parallelism = c.parallelism;
  if (!c.index_dir.empty()) cfg.index_dir = c.index_dir;
  return cfg;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_usage_table(const llm::UsageSummary& s) {
  std::printf("%-22s %6s %12s %14s %16s\n", "phase", "apps", "tokens", "avg_tokens", "avg_latency_s");
  auto row = [](const char* name, const llm::PhaseTotals& t) {
    std::printf("%-22s %6zu %12zu %14s %16s\n", name, t.apps, t.total.total_tokens(),
                fixed(t.avg_tokens_per_app, 1).c_str(), fixed(t.avg_latency_per_app, 2).c_str());
  };
  row("identification", s.identification);
  row("evidence_generation", s.evidence_generation);
  std::printf("%-22s %6zu %12zu %14s %16s\n", "total", s.apps,
              s.identification.total.total_tokens() + s.evidence_generation.total.total_tokens(),
              fixed(s.avg_tokens_per_app, 1).c_str(), fixed(s.avg_latency_per_app, 2).c_str());
}

int cmd_build_tree(const Common& c, const std::string& tree_cfg, const std::string& history,
                   const std::string& out) {
  auto cfg = load_config(c);
  if (!tree_cfg.empty()) cfg.tree_config = fs::absolute(tree_cfg).string();
  if (!history.empty()) cfg.history = fs::absolute(history).string();
  cfg.tree_artifact.clear();
  const auto normalizer = cfg.aliases.empty() ? retrieval::IndicatorNormalizer::defaults()
                                              : retrieval::IndicatorNormalizer::load(cfg.resolve(cfg.aliases).string());
  const auto embedder = service::make_embedder(cfg);
  const auto tree = service::load_or_build_tree(cfg, *embedder, normalizer);
  const std::string text = tree.to_json().dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream(out) << text;
  }
  std::cerr << "tree " << tree.version << " roots=" << tree.roots.size() << " sha=" << hex64(fnv1a64(text)) << "\n";
  return 0;
}

int cmd_analyze(const Common& c, const std::string& input, const std::string& out, const std::string& labels,
                bool quiet) {
  const auto cfg = load_config(c);
  auto stream = read_app_records_file(input);
  for (const auto& e : stream.errors) spdlog::warn("{}:{}: {}", input, e.line, e.message);
  auto rt = service::Runtime::create(cfg);
  const auto result = pipeline::run_batch(stream.records, rt->engine(), cfg.parallelism);

  if (!out.empty()) {
    std::ofstream f(out);
    for (const auto& o : result.outcomes) f << pipeline::outcome_to_json(o).dump() << "\n";
  }
  if (!quiet) {
    for (const auto& o : result.outcomes) {
      std::string cats;
      for (auto cat : o.categories) cats += (cats.empty() ? "" : ",") + std::string(to_string(cat));
      std::printf("%-16s %-8s %s%s\n", o.app_id.c_str(), std::string(pipeline::to_string(o.status)).c_str(),
                  cats.c_str(), o.detail.empty() ? "" : ("  " + o.detail).c_str());
    }
  }
  json summary = result.summary;
  summary["gate"] = pipeline::to_string(cfg.gate);
  summary["policy"] = pipeline::to_string(cfg.policy);
  summary["parse_errors"] = stream.errors.size();
  if (!labels.empty()) summary["score"] = pipeline::score_outcomes(result.outcomes, pipeline::load_labels(labels));
  std::cout << summary.dump(2) << "\n";
  return result.summary.errors == 0 && stream.errors.empty() ? 0 : 2;
}

int cmd_usage(const std::string& outcomes_path, bool as_json) {
  std::ifstream in(outcomes_path);
  if (!in) throw Error("cannot open " + outcomes_path);
  llm::UsageLedger ledger;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto o = json::parse(line);
    const auto app = o.at("app_id").get<std::string>();
    const auto id = o.at("usage").at("identification").get<llm::UsageStats>();
    const auto ev = o.at("usage").at("evidence_generation").get<llm::UsageStats>();
    if (id.total_tokens() > 0 || id.latency > 0) ledger.record(id, llm::Phase::Identification, app);
    if (ev.total_tokens() > 0 || ev.latency > 0) ledger.record(ev, llm::Phase::EvidenceGeneration, app);
  }
  const auto s = ledger.summary();
  if (as_json) {
    std::cout << json(s).dump(2) << "\n";
  } else {
    print_usage_table(s);
  }
  return 0;
}

int cmd_serve(const Common& c, int port, const std::string& host, const std::string& data_dir) {
  auto cfg = load_config(c);
  if (port >= 0) cfg.port = port;
  if (!host.empty()) cfg.host = host;
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  const auto data = cfg.resolve(cfg.data_dir);
  if (cfg.index_dir.empty()) cfg.index_dir = (data / "index").string();

  // Worker threads inherit the mask, so only sigwait below sees these.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  auto rt = service::Runtime::create(cfg);
  auto store = service::ReportStore::open(data / "store", *rt->index, *rt->embedder, rt->normalizer);
  if (store->recovered() > 0) spdlog::info("rolled forward {} interrupted decision(s)", store->recovered());

  service::ServerOptions opts;
  opts.host = cfg.host;
  opts.port = cfg.port;
  if (const char* t = std::getenv(cfg.api_token_env.c_str()); t && *t) opts.api_token = t;
  service::Service svc(*rt, *store, opts);
  const int bound = svc.start();
  spdlog::info("serving on {}:{} (backend={}, index v{}, tree {})", cfg.host, bound, cfg.backend,
               rt->index->version(), rt->tree.version);
  std::printf("listening %d\n", bound);
  std::fflush(stdout);

  int sig = 0;
  sigwait(&sigs, &sig);
  spdlog::info("signal {}, shutting down", sig);
  svc.stop();
  return 0;
}

int cmd_index(const Common& c, const std::string& action, const std::string& file) {
  auto cfg = load_config(c);
  if (cfg.index_dir.empty()) throw Error("index commands need --index-dir (or index_dir in the config)");
  const auto normalizer = cfg.aliases.empty() ? retrieval::IndicatorNormalizer::defaults()
                                              : retrieval::IndicatorNormalizer::load(cfg.resolve(cfg.aliases).string());
  const auto embedder = service::make_embedder(cfg);
  auto index = retrieval::CaseIndex::open(cfg.resolve(cfg.index_dir), embedder->dim());

  if (action == "seed" || action == "import") {
    const auto path = file.empty() ? cfg.resolve(cfg.history).string() : file;
    const auto added = service::seed_index(*index, path, *embedder, normalizer);
    std::cout << json{{"added", added}, {"version", index->version()}}.dump() << "\n";
  } else if (action == "export") {
    std::ofstream f;
    std::ostream* out = &std::cout;
    if (!file.empty() && file != "-") {
      f.open(file);
      out = &f;
    }
    for (const auto& cs : index->snapshot()->cases) {
      json j = *cs;
      j.erase("embedding");
      *out << j.dump() << "\n";
    }
  } else if (action == "stats") {
    std::cout << json(index->stats()).dump(2) << "\n";
  } else if (action == "compact") {
    index->compact();
    std::cout << json{{"version", index->version()}}.dump() << "\n";
  } else {
    throw Error("unknown index action '" + action + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"apprisk: multi-source mobile app risk profiling"};
  app.require_subcommand(1);
  Common common;

  auto* build = app.add_subcommand("build-tree", "build the risk identification tree artifact");
  add_common(build, common);
  std::string tree_out;
  std::string tree_cfg, history;
  build->add_option("--tree-config", tree_cfg, "tree config document");
  build->add_option("--history", history, "history case file (JSON Lines)");
  build->add_option("-o,--out", tree_out, "artifact path (stdout when omitted)");

  auto* analyze = app.add_subcommand("analyze", "analyze a JSON Lines file of app records");
  add_common(analyze, common);
  std::string input, outcomes_out, labels;
  bool quiet = false;
  analyze->add_option("input", input, "app records (JSON Lines)")->required()->check(CLI::ExistingFile);
  analyze->add_option("-o,--out", outcomes_out, "write one outcome per line");
  analyze->add_option("--parallelism", common.parallelism, "worker count")->check(CLI::PositiveNumber);
  analyze->add_option("--policy", common.policy, "strict|advisory")->check(CLI::IsMember({"strict", "advisory"}));
  analyze->add_option("--backend", common.backend, "mock|remote")->check(CLI::IsMember({"mock", "remote"}));
  analyze->add_option("--gate", common.gate, "none|tree_only|history_only|both")
      ->check(CLI::IsMember({"none", "tree_only", "history_only", "both"}));
  analyze->add_option("--labels", labels, "planted labels (JSON Lines) to score against");
  analyze->add_option("--index-dir", common.index_dir, "persisted case index (in-memory when omitted)");
  analyze->add_flag("-q,--quiet", quiet, "print only the summary");

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  add_common(serve, common);
  int port = -1;
  std::string host, data_dir;
  serve->add_option("--port", port, "port (0 picks a free one)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--data-dir", data_dir, "reports, decisions and index");
  serve->add_option("--backend", common.backend, "mock|remote")->check(CLI::IsMember({"mock", "remote"}));
  serve->add_option("--policy", common.policy, "strict|advisory")->check(CLI::IsMember({"strict", "advisory"}));

  auto* index = app.add_subcommand("index", "maintain a persisted case index");
  add_common(index, common);
  std::string action, file;
  index->add_option("action", action, "seed|import|export|stats|compact")
      ->required()
      ->check(CLI::IsMember({"seed", "import", "export", "stats", "compact"}));
  index->add_option("file", file, "input for import, output for export");
  index->add_option("--index-dir", common.index_dir, "index directory");

  auto* usage = app.add_subcommand("usage", "per-phase token and time summary of an outcomes file");
  std::string usage_in;
  bool usage_json = false;
  usage->add_option("outcomes", usage_in, "outcomes written by analyze --out")->required()->check(CLI::ExistingFile);
  usage->add_flag("--json", usage_json, "print JSON instead of a table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) return cmd_build_tree(common, tree_cfg, history, tree_out);
    if (*analyze) return cmd_analyze(common, input, outcomes_out, labels, quiet);
    if (*serve) return cmd_serve(common, port, host, data_dir);
    if (*index) return cmd_index(common, action, file);
    if (*usage) return cmd_usage(usage_in, usage_json);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
