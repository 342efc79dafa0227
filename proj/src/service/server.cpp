#include "apprisk/service/server.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <regex>

#include "apprisk/core/schema.hpp"
#include "apprisk/service/api_schema_text.hpp"

namespace apprisk::service {

const json& api_schema() {
  static const json doc = json::parse(kApiSchemaText);
  return doc;
}

namespace {

ApiResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", {{"code", status}, {"message", message}}}}};
}

std::string first(const std::multimap<std::string, std::string>& m, const std::string& key,
                  const std::string& fallback = {}) {
  auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::optional<json> parse_body(const std::string& body, ApiResponse& err) {
  try {
    return json::parse(body);
  } catch (const std::exception& e) {
    err = error_response(400, std::string("body is not valid JSON: ") + e.what());
    return std::nullopt;
  }
}

bool conforms(const json& instance, const std::string& def, ApiResponse& err) {
  const auto issues = validate_against_def(instance, api_schema(), def);
  if (issues.empty()) return true;
  std::string msg = def + " schema violation: " + issues.front();
  if (issues.size() > 1) msg += " (+" + std::to_string(issues.size() - 1) + " more)";
  err = error_response(400, msg);
  return false;
}

std::size_t parse_positive(const std::string& text, const char* name) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw BadRequestError(std::string(name) + " must be a positive integer");
}

}  // namespace

Service::Service(Runtime& runtime, ReportStore& store, ServerOptions options)
    : runtime_(runtime), store_(store), options_(std::move(options)), engine_(runtime.engine()) {
  job_thread_ = std::thread([this] { job_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mu_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (job_thread_.joinable()) job_thread_.join();
}

ApiResponse Service::handle(const std::string& method, const std::string& path,
                            const std::multimap<std::string, std::string>& query, const std::string& body,
                            const std::multimap<std::string, std::string>& headers) {
  static const std::regex kReport("^/v1/reports/([^/]+)$");
  static const std::regex kDecision("^/v1/reports/([^/]+)/decision$");
  static const std::regex kJob("^/v1/jobs/([^/]+)$");

  if (path != "/v1/health" && !options_.api_token.empty()) {
    if (first(headers, "Authorization") != "Bearer " + options_.api_token) {
      return error_response(401, "missing or invalid bearer token");
    }
  }
  std::string request_id = first(headers, "Idempotency-Key");
  if (request_id.empty()) request_id = first(headers, "X-Request-Id");

  try {
    std::smatch m;
    if (path == "/v1/health") return method == "GET" ? health() : error_response(405, "method not allowed");
    if (path == "/v1/index/stats") return method == "GET" ? index_stats() : error_response(405, "method not allowed");
    if (path == "/v1/apps/analyze") {
      return method == "POST" ? analyze(body, request_id) : error_response(405, "method not allowed");
    }
    if (path == "/v1/apps/analyze-batch") {
      return method == "POST" ? analyze_batch(body, request_id) : error_response(405, "method not allowed");
    }
    if (path == "/v1/reports") return method == "GET" ? list_reports(query) : error_response(405, "method not allowed");
    if (std::regex_match(path, m, kDecision)) {
      return method == "POST" ? decide(m[1], body, request_id) : error_response(405, "method not allowed");
    }
    if (std::regex_match(path, m, kReport)) return method == "GET" ? report(m[1]) : error_response(405, "method not allowed");
    if (std::regex_match(path, m, kJob)) return method == "GET" ? job(m[1]) : error_response(405, "method not allowed");
    return error_response(404, "no route for " + path);
  } catch (const BadRequestError& e) {
    return error_response(400, e.what());
  } catch (const NotFoundError& e) {
    return error_response(404, e.what());
  } catch (const ConflictError& e) {
    return error_response(409, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

ApiResponse Service::health() {
  return {200, json{{"status", "ok"},
                    {"index_version", runtime_.index->version()},
                    {"reports", store_.report_count()},
                    {"tree_version", runtime_.tree.version}}};
}

ApiResponse Service::index_stats() { return {200, json(runtime_.index->stats())}; }

ApiResponse Service::analyze(const std::string& body, const std::string& request_id) {
  ApiResponse err;
  auto doc = parse_body(body, err);
  if (!doc || !conforms(*doc, "AppRecord", err)) return err;
  const auto app = doc->get<AppRecord>();
  if (auto issues = validate_app_record(app); !issues.empty()) {
    return error_response(400, "invalid record: " + issues.front().field + ": " + issues.front().message);
  }
  if (!request_id.empty()) {
    // A repeated request replays the stored report instead of analyzing again.
    if (auto prior = store_.report_by_request(request_id)) {
      json out = prior->outcome;
      out["report_id"] = prior->report_id;
      return {200, out};
    }
  }
  const auto outcome = pipeline::run_analysis(app, engine_);
  json out = pipeline::outcome_to_json(outcome);
  out["report_id"] = nullptr;
  if (outcome.status == pipeline::OutcomeStatus::Flagged) {
    const auto stored = store_.add_report(out, request_id);
    out = stored.outcome;
    out["report_id"] = stored.report_id;
  }
  return {200, out};
}

ApiResponse Service::analyze_batch(const std::string& body, const std::string& request_id) {
  ApiResponse err;
  auto doc = parse_body(body, err);
  if (!doc || !conforms(*doc, "BatchRequest", err)) return err;

  if (!request_id.empty()) {
    std::lock_guard lock(jobs_mu_);
    if (auto it = job_requests_.find(request_id); it != job_requests_.end()) {
      return {202, json{{"job_id", it->second}, {"status", jobs_.at(it->second)->status}}};
    }
  }
  auto job = std::make_shared<Job>();
  job->parallelism = doc->value("parallelism", runtime_.config().parallelism);
  job->request_id = request_id;
  if (doc->contains("records")) {
    job->records = (*doc)["records"].get<std::vector<AppRecord>>();
  } else {
    const auto path = runtime_.config().resolve((*doc)["corpus_path"].get<std::string>());
    if (!std::filesystem::exists(path)) throw NotFoundError("corpus file not found: " + path.string());
    auto stream = read_app_records_file(path.string());
    if (!stream.errors.empty()) {
      throw BadRequestError("corpus line " + std::to_string(stream.errors.front().line) + ": " +
                            stream.errors.front().message);
    }
    job->records = std::move(stream.records);
  }

  std::lock_guard lock(jobs_mu_);
  char id[16];
  std::snprintf(id, sizeof id, "J%06zu", jobs_.size() + 1);
  job->job_id = id;
  jobs_[job->job_id] = job;
  if (!request_id.empty()) job_requests_[request_id] = job->job_id;
  queue_.push_back(job);
  jobs_cv_.notify_all();
  return {202, json{{"job_id", job->job_id}, {"status", job->status}}};
}

json Service::job_json(const Job& j) const {
  return json{{"job_id", j.job_id}, {"status", j.status}, {"detail", j.detail}, {"summary", j.summary},
              {"outcomes", j.outcomes}};
}

ApiResponse Service::job(const std::string& id) {
  std::lock_guard lock(jobs_mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return error_response(404, "unknown job '" + id + "'");
  return {200, job_json(*it->second)};
}

void Service::job_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(jobs_mu_);
      jobs_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
      job->status = "running";
      job_running_ = true;
    }
    json outcomes = json::array();
    json summary;
    std::string status = "done";
    std::string detail;
    try {
      const auto result = pipeline::run_batch(job->records, engine_, job->parallelism);
      for (std::size_t i = 0; i < result.outcomes.size(); ++i) {
        const auto& o = result.outcomes[i];
        json item{{"app_id", o.app_id}, {"status", pipeline::to_string(o.status)}, {"categories", o.categories},
                  {"report_id", nullptr}, {"detail", o.detail}};
        if (o.status == pipeline::OutcomeStatus::Flagged) {
          json full = pipeline::outcome_to_json(o);
          full["report_id"] = nullptr;
          const auto req = job->request_id.empty() ? std::string{} : job->request_id + "#" + std::to_string(i);
          const auto stored = store_.add_report(full, req);
          item["report_id"] = stored.report_id;
        }
        outcomes.push_back(std::move(item));
      }
      summary = result.summary;
    } catch (const std::exception& e) {
      status = "failed";
      detail = e.what();
    }
    {
      std::lock_guard lock(jobs_mu_);
      job->status = status;
      job->detail = detail;
      job->summary = summary;
      job->outcomes = std::move(outcomes);
      job->records.clear();
      job_running_ = false;
    }
    jobs_idle_cv_.notify_all();
  }
}

void Service::drain_jobs() {
  std::unique_lock lock(jobs_mu_);
  jobs_idle_cv_.wait(lock, [&] { return queue_.empty() && !job_running_; });
}

ApiResponse Service::list_reports(const std::multimap<std::string, std::string>& query) {
  const auto status = first(query, "status", "pending");
  const auto page = parse_positive(first(query, "page", "1"), "page");
  const auto page_size = parse_positive(first(query, "page_size", "20"), "page_size");
  std::optional<std::string> category;
  if (query.count("category")) category = first(query, "category");
  const auto p = store_.list(status, category, page, page_size);
  return {200, json{{"items", p.items}, {"page", p.page}, {"page_size", p.page_size}, {"total", p.total}}};
}

ApiResponse Service::report(const std::string& id) {
  const auto r = store_.report(id);
  if (!r) return error_response(404, "unknown report '" + id + "'");
  const auto d = store_.decision(id);
  const std::string status = !d ? "pending" : d->decision == Decision::Confirm ? "confirmed" : "rejected";
  return {200, json{{"report_id", r->report_id},
                    {"app_id", r->outcome.at("app_id")},
                    {"submitted_at", r->submitted_at},
                    {"status", status},
                    {"report", r->outcome.at("report")},
                    {"decision", d ? json(*d) : json(nullptr)}}};
}

ApiResponse Service::decide(const std::string& id, const std::string& body, const std::string& request_id) {
  ApiResponse err;
  auto doc = parse_body(body, err);
  if (!doc || !conforms(*doc, "AnalystDecision", err)) return err;
  auto d = doc->get<AnalystDecision>();
  if (!d.report_id.empty() && d.report_id != id) {
    return error_response(400, "body report_id '" + d.report_id + "' does not match path '" + id + "'");
  }
  d.report_id = id;
  if (d.decided_at == 0) d.decided_at = now_seconds();
  return {200, json(store_.decide(d, request_id))};
}

void Service::install_routes() {
  http_ = std::make_unique<httplib::Server>();
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    std::multimap<std::string, std::string> headers(req.headers.begin(), req.headers.end());
    const auto r = handle(req.method, req.path, query, req.body, headers);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http_->Get(".*", dispatch);
  http_->Post(".*", dispatch);
  http_->Put(".*", dispatch);
  http_->Delete(".*", dispatch);
}

int Service::start() {
  install_routes();
  int port = options_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(options_.host);
  } else if (!http_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void Service::run() {
  install_routes();
  if (!http_->listen(options_.host, options_.port)) {
    throw Error("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
}

void Service::stop() {
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
}

}  // namespace apprisk::service
