#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "apprisk/core/json_io.hpp"
#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::service {

class NotFoundError : public Error {
 public:
  using Error::Error;
};
class ConflictError : public Error {
 public:
  using Error::Error;
};
class BadRequestError : public Error {
 public:
  using Error::Error;
};

enum class Decision { Confirm, Reject };
std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct AnalystDecision {
  std::string report_id;
  Decision decision = Decision::Confirm;
  std::string analyst_id;
  std::string note;
  std::int64_t decided_at = 0;
  bool supersede = false;
  bool operator==(const AnalystDecision&) const = default;
};
void to_json(json& j, const AnalystDecision& d);
void from_json(const json& j, AnalystDecision& d);

struct StoredReport {
  std::string report_id;
  std::string request_id;
  std::int64_t submitted_at = 0;
  json outcome;  // outcome_to_json() of a flagged analysis
};

struct ReportPage {
  std::vector<json> items;
  std::size_t page = 1;
  std::size_t page_size = 20;
  std::size_t total = 0;
};

struct DecisionResult {
  AnalystDecision decision;
  std::vector<std::string> appended;  // "app_id/category" per index append
  std::uint64_t index_version = 0;
  bool replayed = false;  // served from the idempotency record
};
void to_json(json& j, const DecisionResult& r);

struct ConsistencyAudit {
  /// analyst_confirmed cases whose report has no committed confirm decision
  std::vector<std::string> orphan_cases;
  /// committed confirm decisions whose cases are missing from the index
  std::vector<std::string> orphan_decisions;
  std::size_t committed_confirms = 0;
  std::size_t confirmed_cases = 0;
  bool ok() const { return orphan_cases.empty() && orphan_decisions.empty(); }
};

/// Cases a confirm decision appends: one per flagged category of the report.
std::vector<retrieval::DelistedCase> cases_from_report(const StoredReport& report, std::int64_t delisted_at,
                                                       const retrieval::Embedder& embedder,
                                                       const retrieval::IndicatorNormalizer& normalizer);

/// Durable reports and decisions in a single append-only journal
/// (store.log.jsonl). Confirm decisions are written as intent, index appends,
/// commit; open() rolls forward any intent left without a commit.
class ReportStore {
 public:
  static std::unique_ptr<ReportStore> open(const std::filesystem::path& dir, retrieval::CaseIndex& index,
                                           const retrieval::Embedder& embedder,
                                           const retrieval::IndicatorNormalizer& normalizer);

  /// Stores a flagged outcome. A repeated request id returns the first report.
  StoredReport add_report(const json& outcome, const std::string& request_id = {});

  std::optional<StoredReport> report(const std::string& report_id) const;
  std::optional<StoredReport> report_by_request(const std::string& request_id) const;
  std::optional<AnalystDecision> decision(const std::string& report_id) const;
  /// status: pending | decided | confirmed | rejected | all
  ReportPage list(const std::string& status, const std::optional<std::string>& category, std::size_t page,
                  std::size_t page_size) const;
  std::size_t report_count() const;

  /// Throws NotFoundError, ConflictError (second decision without supersede) or
  /// Error when the index refuses the cases; nothing is recorded in that case.
  DecisionResult decide(const AnalystDecision& decision, const std::string& request_id = {});

  ConsistencyAudit audit() const;

  /// Roll-forwards performed by open().
  std::size_t recovered() const { return recovered_; }

  /// Test hook: sleep between index append and commit.
  void set_commit_delay(std::chrono::milliseconds d) { commit_delay_ = d; }

 private:
  ReportStore(std::filesystem::path dir, retrieval::CaseIndex& index, const retrieval::Embedder& embedder,
              const retrieval::IndicatorNormalizer& normalizer);
  void replay();
  void write(const json& record);
  std::vector<std::string> apply_cases(const StoredReport& report, const AnalystDecision& d);
  json item_json(const StoredReport& r) const;

  std::filesystem::path dir_;
  std::filesystem::path log_path_;
  retrieval::CaseIndex& index_;
  const retrieval::Embedder& embedder_;
  const retrieval::IndicatorNormalizer& normalizer_;

  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
  std::uint64_t seq_ = 0;
  std::vector<StoredReport> reports_;  // submission order
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> report_requests_;  // request id -> report id
  std::map<std::string, AnalystDecision> decisions_;
  std::map<std::string, DecisionResult> decision_requests_;
  std::size_t recovered_ = 0;
  std::chrono::milliseconds commit_delay_{0};
};

}  // namespace apprisk::service
