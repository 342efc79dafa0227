// JSON-in, JSON-out bindings. The Python side parses and dumps; values cross as strings.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "apprisk/service/runtime.hpp"
#include "apprisk/stats/stats.hpp"

namespace py = pybind11;
using namespace apprisk;

namespace {

constexpr const char* kVersion = "0.1.0";

class PyEngine {
 public:
  PyEngine(const std::string& root, const std::string& gate, const std::string& policy, const std::string& config) {
    auto cfg = config.empty() ? service::RuntimeConfig{} : service::RuntimeConfig::from_json(json::parse(config), root);
    if (config.empty()) cfg.root = root;
    if (!gate.empty()) cfg.gate = pipeline::gate_mode_from_string(gate);
    if (!policy.empty()) cfg.policy = pipeline::validation_policy_from_string(policy);
    rt_ = service::Runtime::create(cfg);
  }

  std::string analyze(const std::string& record_json) {
    const auto app = json::parse(record_json).get<AppRecord>();
    py::gil_scoped_release release;
    return pipeline::outcome_to_json(pipeline::run_analysis(app, rt_->engine())).dump();
  }

  std::string analyze_batch(const std::vector<std::string>& records, std::size_t parallelism) {
    std::vector<AppRecord> apps;
    apps.reserve(records.size());
    for (const auto& r : records) apps.push_back(json::parse(r).get<AppRecord>());
    py::gil_scoped_release release;
    const auto result = pipeline::run_batch(apps, rt_->engine(), parallelism);
    json out{{"summary", result.summary}, {"outcomes", json::array()}};
    for (const auto& o : result.outcomes) out["outcomes"].push_back(pipeline::outcome_to_json(o));
    return out.dump();
  }

  std::string index_stats() const { return json(rt_->index->stats()).dump(); }
  std::string tree_version() const { return rt_->tree.version; }
  std::string tree() const { return rt_->tree.to_json().dump(); }

 private:
  std::unique_ptr<service::Runtime> rt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "apprisk engine bindings";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "AppRiskError");

  m.def("t_critical", &stats::t_critical, py::arg("level"), py::arg("df"));

  m.def(
      "confidence_interval",
      [](const std::vector<double>& samples, double level) {
        const auto ci = stats::compute_confidence_interval(stats::compute_sample_stats(samples), level);
        return py::make_tuple(ci.lower, ci.upper);
      },
      py::arg("samples"), py::arg("level") = stats::kDefaultLevel);

  m.def(
      "validate_record",
      [](const std::string& record_json) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& i : validate_app_record(json::parse(record_json).get<AppRecord>())) {
          out.emplace_back(i.field, i.message);
        }
        return out;
      },
      py::arg("record_json"));

  m.def(
      "build_tree",
      [](const std::string& tree_config, const std::string& history, std::size_t embedding_dim) {
        retrieval::HashingEmbedder e(embedding_dim);
        return tree::build_tree_from_files(tree_config, history, e, retrieval::IndicatorNormalizer::defaults())
            .to_json()
            .dump();
      },
      py::arg("tree_config"), py::arg("history"), py::arg("embedding_dim") = 256);

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<const std::string&, const std::string&, const std::string&, const std::string&>(),
           py::arg("root"), py::arg("gate") = "", py::arg("policy") = "", py::arg("config") = "")
      .def("analyze", &PyEngine::analyze, py::arg("record_json"))
      .def("analyze_batch", &PyEngine::analyze_batch, py::arg("records"), py::arg("parallelism") = 4)
      .def("index_stats", &PyEngine::index_stats)
      .def("tree", &PyEngine::tree)
      .def_property_readonly("tree_version", &PyEngine::tree_version);
}
