#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "apprisk/service/runtime.hpp"
#include "apprisk/service/store.hpp"

namespace httplib {
class Server;
}

namespace apprisk::service {

/// The published API schema document (docs/schemas/api.schema.json), compiled in.
const json& api_schema();

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string api_token;  // empty disables the bearer check
};

struct ApiResponse {
  int status = 200;
  json body;
};

/// HTTP front end over a Runtime and a ReportStore. handle() is transport-free
/// so contract tests can drive it directly.
class Service {
 public:
  Service(Runtime& runtime, ReportStore& store, ServerOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::multimap<std::string, std::string>& query, const std::string& body,
                     const std::multimap<std::string, std::string>& headers = {});

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

  /// Blocks until queued batch jobs have finished.
  void drain_jobs();

 private:
  struct Job {
    std::string job_id;
    std::string status = "queued";
    std::string detail;
    std::vector<AppRecord> records;
    std::size_t parallelism = 1;
    std::string request_id;
    json summary;
    json outcomes = json::array();
  };

  ApiResponse analyze(const std::string& body, const std::string& request_id);
  ApiResponse analyze_batch(const std::string& body, const std::string& request_id);
  ApiResponse job(const std::string& id);
  ApiResponse list_reports(const std::multimap<std::string, std::string>& query);
  ApiResponse report(const std::string& id);
  ApiResponse decide(const std::string& id, const std::string& body, const std::string& request_id);
  ApiResponse health();
  ApiResponse index_stats();
  json job_json(const Job& job) const;
  void job_loop();
  void install_routes();

  Runtime& runtime_;
  ReportStore& store_;
  ServerOptions options_;
  pipeline::Engine engine_;

  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;

  mutable std::mutex jobs_mu_;
  std::condition_variable jobs_cv_;
  std::condition_variable jobs_idle_cv_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::map<std::string, std::string> job_requests_;
  std::deque<std::shared_ptr<Job>> queue_;
  bool job_running_ = false;
  bool stopping_ = false;
  std::thread job_thread_;
};

}  // namespace apprisk::service
