#include "apprisk/service/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

namespace apprisk::service {

namespace fs = std::filesystem;

std::string_view to_string(Decision d) { return d == Decision::Confirm ? "confirm" : "reject"; }

Decision decision_from_string(std::string_view s) {
  if (s == "confirm") return Decision::Confirm;
  if (s == "reject") return Decision::Reject;
  throw BadRequestError("decision must be confirm or reject, got '" + std::string(s) + "'");
}

void to_json(json& j, const AnalystDecision& d) {
  j = json{{"report_id", d.report_id}, {"decision", to_string(d.decision)}, {"analyst_id", d.analyst_id},
           {"note", d.note},           {"decided_at", d.decided_at},       {"supersede", d.supersede}};
}

void from_json(const json& j, AnalystDecision& d) {
  d.report_id = j.value("report_id", std::string{});
  d.decision = decision_from_string(j.at("decision").get<std::string>());
  d.analyst_id = j.at("analyst_id").get<std::string>();
  d.note = j.value("note", std::string{});
  d.decided_at = j.value("decided_at", std::int64_t{0});
  d.supersede = j.value("supersede", false);
}

void to_json(json& j, const DecisionResult& r) {
  j = json{{"decision", r.decision}, {"appended", r.appended}, {"index_version", r.index_version},
           {"replayed", r.replayed}};
}

namespace {

std::string case_key(const std::string& app_id, RiskCategory c) { return app_id + "/" + std::string(to_string(c)); }

void fsync_path(const fs::path& p) {
  const int fd = ::open(p.c_str(), O_RDONLY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::vector<std::string> report_categories(const StoredReport& r) {
  std::vector<std::string> out;
  const auto& report = r.outcome.at("report");
  for (const auto& c : report.at("risk_summary")) out.push_back(c.get<std::string>());
  return out;
}

}  // namespace

std::vector<retrieval::DelistedCase> cases_from_report(const StoredReport& stored, std::int64_t delisted_at,
                                                       const retrieval::Embedder& embedder,
                                                       const retrieval::IndicatorNormalizer& normalizer) {
  const auto& report = stored.outcome.at("report");
  const auto& overview = report.at("app_overview");
  std::vector<retrieval::DelistedCase> cases;
  for (const auto& risk : report.at("risks")) {
    const auto cat = risk.at("category").get<std::string>();
    retrieval::DelistedCase c;
    c.app_id = overview.at("app_id").get<std::string>();
    c.app_name = overview.at("app_name").get<std::string>();
    c.risk_category = risk.at("category").get<RiskCategory>();
    c.groups = risk.at("evidence_groups").get<std::vector<FeatureGroupId>>();
    std::vector<std::string> indicators;
    for (const auto& e : report.at("evidence_chain")) {
      bool mine = false;
      for (const auto& ec : e.at("categories")) mine = mine || ec.get<std::string>() == cat;
      if (!mine) continue;
      for (const auto& i : e.at("indicators")) indicators.push_back(i.get<std::string>());
      c.snippet_text += (c.snippet_text.empty() ? "" : "\n") + e.at("summary").get<std::string>();
    }
    c.indicators = normalizer.normalize_all(indicators);
    c.embedding = retrieval::embed_text(embedder, c.snippet_text);
    c.delisted_at = delisted_at;
    c.origin = retrieval::CaseOrigin::AnalystConfirmed;
    c.source_ref = stored.report_id;
    std::sort(c.groups.begin(), c.groups.end());
    cases.push_back(std::move(c));
  }
  return cases;
}

ReportStore::ReportStore(fs::path dir, retrieval::CaseIndex& index, const retrieval::Embedder& embedder,
                         const retrieval::IndicatorNormalizer& normalizer)
    : dir_(std::move(dir)), log_path_(dir_ / "store.log.jsonl"), index_(index), embedder_(embedder),
      normalizer_(normalizer) {}

std::unique_ptr<ReportStore> ReportStore::open(const fs::path& dir, retrieval::CaseIndex& index,
                                               const retrieval::Embedder& embedder,
                                               const retrieval::IndicatorNormalizer& normalizer) {
  fs::create_directories(dir);
  auto store = std::unique_ptr<ReportStore>(new ReportStore(dir, index, embedder, normalizer));
  if (!fs::exists(store->log_path_)) {
    std::ofstream(store->log_path_).flush();
    fsync_path(dir);
  }
  store->replay();
  return store;
}

void ReportStore::write(const json& record) {
  const std::string line = record.dump() + "\n";
  const int fd = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw Error("cannot open " + log_path_.string());
  std::size_t off = 0;
  while (off < line.size()) {
    const auto n = ::write(fd, line.data() + off, line.size() - off);
    if (n < 0) {
      ::close(fd);
      throw Error("write failed on " + log_path_.string());
    }
    off += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

void ReportStore::replay() {
  std::ifstream in(log_path_, std::ios::binary);
  std::string line;
  std::uint64_t good_bytes = 0;
  std::map<std::uint64_t, std::pair<AnalystDecision, std::string>> pending;  // txn -> (decision, request id)
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  const bool ends_with_newline = [&] {
    std::ifstream f(log_path_, std::ios::binary | std::ios::ate);
    const auto size = f.tellg();
    if (size <= 0) return true;
    f.seekg(-1, std::ios::end);
    return f.get() == '\n';
  }();

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    json rec;
    try {
      if (last && !ends_with_newline) throw Error("torn");
      rec = json::parse(lines[i]);
    } catch (const std::exception&) {
      if (!last) throw Error("corrupt store journal at line " + std::to_string(i + 1));
      fs::resize_file(log_path_, good_bytes);
      break;
    }
    good_bytes += lines[i].size() + 1;
    seq_ = std::max(seq_, rec.at("seq").get<std::uint64_t>());
    const auto type = rec.at("type").get<std::string>();
    if (type == "report") {
      StoredReport r{rec.at("report_id").get<std::string>(), rec.value("request_id", std::string{}),
                     rec.at("submitted_at").get<std::int64_t>(), rec.at("outcome")};
      by_id_[r.report_id] = reports_.size();
      if (!r.request_id.empty()) report_requests_[r.request_id] = r.report_id;
      reports_.push_back(std::move(r));
    } else if (type == "intent") {
      pending[rec.at("seq").get<std::uint64_t>()] = {rec.at("decision").get<AnalystDecision>(),
                                                      rec.value("request_id", std::string{})};
    } else if (type == "commit") {
      const auto txn = rec.at("txn").get<std::uint64_t>();
      auto it = pending.find(txn);
      if (it == pending.end()) throw Error("commit for unknown transaction " + std::to_string(txn));
      DecisionResult result{it->second.first, rec.value("appended", std::vector<std::string>{}),
                            rec.value("index_version", std::uint64_t{0}), false};
      decisions_[result.decision.report_id] = result.decision;
      if (!it->second.second.empty()) decision_requests_[it->second.second] = result;
      pending.erase(it);
    } else if (type == "abort") {
      pending.erase(rec.at("txn").get<std::uint64_t>());
    } else {
      throw Error("unknown store record type '" + type + "'");
    }
  }

  // Roll forward decisions interrupted between intent and commit.
  for (auto& [txn, entry] : pending) {
    auto& [d, request_id] = entry;
    try {
      const auto& r = reports_.at(by_id_.at(d.report_id));
      DecisionResult result{d, apply_cases(r, d), index_.version(), false};
      write({{"type", "commit"}, {"seq", ++seq_}, {"txn", txn}, {"appended", result.appended},
             {"index_version", result.index_version}, {"recovered", true}});
      decisions_[d.report_id] = d;
      if (!request_id.empty()) decision_requests_[request_id] = result;
    } catch (const std::exception& e) {
      write({{"type", "abort"}, {"seq", ++seq_}, {"txn", txn}, {"reason", e.what()}});
    }
    ++recovered_;
  }
}

std::vector<std::string> ReportStore::apply_cases(const StoredReport& report, const AnalystDecision& d) {
  std::vector<std::string> appended;
  if (d.decision != Decision::Confirm) return appended;
  for (auto& c : cases_from_report(report, d.decided_at, embedder_, normalizer_)) {
    if (index_.contains(c.app_id, c.risk_category)) continue;
    const auto key = case_key(c.app_id, c.risk_category);
    index_.append(std::move(c));
    appended.push_back(key);
  }
  return appended;
}

StoredReport ReportStore::add_report(const json& outcome, const std::string& request_id) {
  if (!outcome.contains("report") || !outcome["report"].is_object()) {
    throw BadRequestError("only flagged outcomes carry a report");
  }
  std::lock_guard wl(write_mu_);
  {
    std::shared_lock rl(mu_);
    if (!request_id.empty()) {
      if (auto it = report_requests_.find(request_id); it != report_requests_.end()) {
        return reports_.at(by_id_.at(it->second));
      }
    }
  }
  char id[16];
  std::snprintf(id, sizeof id, "R%06zu", reports_.size() + 1);
  StoredReport r{id, request_id,
                 std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                     .count(),
                 outcome};
  const auto seq = seq_ + 1;
  write({{"type", "report"}, {"seq", seq}, {"report_id", r.report_id}, {"request_id", r.request_id},
         {"submitted_at", r.submitted_at}, {"outcome", r.outcome}});
  std::unique_lock lock(mu_);
  seq_ = seq;
  by_id_[r.report_id] = reports_.size();
  if (!request_id.empty()) report_requests_[request_id] = r.report_id;
  reports_.push_back(r);
  return r;
}

std::optional<StoredReport> ReportStore::report(const std::string& report_id) const {
  std::shared_lock lock(mu_);
  auto it = by_id_.find(report_id);
  if (it == by_id_.end()) return std::nullopt;
  return reports_[it->second];
}

std::optional<StoredReport> ReportStore::report_by_request(const std::string& request_id) const {
  std::shared_lock lock(mu_);
  auto it = report_requests_.find(request_id);
  if (it == report_requests_.end()) return std::nullopt;
  return reports_.at(by_id_.at(it->second));
}

std::optional<AnalystDecision> ReportStore::decision(const std::string& report_id) const {
  std::shared_lock lock(mu_);
  auto it = decisions_.find(report_id);
  if (it == decisions_.end()) return std::nullopt;
  return it->second;
}

std::size_t ReportStore::report_count() const {
  std::shared_lock lock(mu_);
  return reports_.size();
}

json ReportStore::item_json(const StoredReport& r) const {
  const auto& report = r.outcome.at("report");
  auto it = decisions_.find(r.report_id);
  std::string status = it == decisions_.end() ? "pending"
                       : it->second.decision == Decision::Confirm ? "confirmed"
                                                                   : "rejected";
  return json{{"report_id", r.report_id},
              {"app_id", r.outcome.at("app_id")},
              {"app_name", report.at("app_overview").at("app_name")},
              {"categories", report.at("risk_summary")},
              {"integrity", report.at("integrity").at("status")},
              {"submitted_at", r.submitted_at},
              {"status", status}};
}

ReportPage ReportStore::list(const std::string& status, const std::optional<std::string>& category,
                             std::size_t page, std::size_t page_size) const {
  static const std::set<std::string> kStatuses = {"pending", "decided", "confirmed", "rejected", "all"};
  if (!kStatuses.count(status)) throw BadRequestError("unknown status filter '" + status + "'");
  if (page == 0 || page_size == 0 || page_size > 200) throw BadRequestError("page must be >= 1 and page_size in 1..200");
  if (category && !parse_risk_category(*category)) throw BadRequestError("unknown risk category '" + *category + "'");

  std::shared_lock lock(mu_);
  std::vector<json> matching;
  for (const auto& r : reports_) {
    auto item = item_json(r);
    const auto s = item["status"].get<std::string>();
    const bool keep = status == "all" || s == status || (status == "decided" && s != "pending");
    if (!keep) continue;
    if (category) {
      const auto cats = report_categories(r);
      if (std::find(cats.begin(), cats.end(), *category) == cats.end()) continue;
    }
    matching.push_back(std::move(item));
  }
  ReportPage out;
  out.page = page;
  out.page_size = page_size;
  out.total = matching.size();
  const auto begin = std::min(matching.size(), (page - 1) * page_size);
  const auto end = std::min(matching.size(), begin + page_size);
  out.items.assign(matching.begin() + begin, matching.begin() + end);
  return out;
}

DecisionResult ReportStore::decide(const AnalystDecision& d, const std::string& request_id) {
  if (d.analyst_id.empty()) throw BadRequestError("analyst_id is required");
  std::lock_guard wl(write_mu_);
  StoredReport report;
  {
    std::shared_lock rl(mu_);
    if (!request_id.empty()) {
      if (auto it = decision_requests_.find(request_id); it != decision_requests_.end()) {
        auto replay = it->second;
        replay.replayed = true;
        return replay;
      }
    }
    auto it = by_id_.find(d.report_id);
    if (it == by_id_.end()) throw NotFoundError("unknown report '" + d.report_id + "'");
    if (decisions_.count(d.report_id) && !d.supersede) {
      throw ConflictError("report '" + d.report_id + "' already has a decision; set supersede to replace it");
    }
    report = reports_[it->second];
  }

  // Refuse before anything is written if the index would reject a case.
  if (d.decision == Decision::Confirm) {
    for (const auto& c : cases_from_report(report, d.decided_at, embedder_, normalizer_)) {
      if (!index_.contains(c.app_id, c.risk_category)) index_.check(c);
    }
  }

  const auto txn = ++seq_;
  write({{"type", "intent"}, {"seq", txn}, {"request_id", request_id}, {"decision", d}});
  DecisionResult result{d, {}, 0, false};
  try {
    result.appended = apply_cases(report, d);
  } catch (const std::exception& e) {
    write({{"type", "abort"}, {"seq", ++seq_}, {"txn", txn}, {"reason", e.what()}});
    throw Error(std::string("decision aborted: ") + e.what());
  }
  result.index_version = index_.version();
  if (commit_delay_.count() > 0) std::this_thread::sleep_for(commit_delay_);
  write({{"type", "commit"}, {"seq", ++seq_}, {"txn", txn}, {"appended", result.appended},
         {"index_version", result.index_version}});

  std::unique_lock lock(mu_);
  decisions_[d.report_id] = d;
  if (!request_id.empty()) decision_requests_[request_id] = result;
  return result;
}

ConsistencyAudit ReportStore::audit() const {
  std::shared_lock lock(mu_);
  ConsistencyAudit a;
  // Reports that ever had a committed confirm: rejects after a confirm do not retract cases.
  std::set<std::string> confirmed;
  std::ifstream in(log_path_);
  std::string line;
  std::map<std::uint64_t, AnalystDecision> intents;
  while (std::getline(in, line)) {
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception&) {
      break;
    }
    const auto type = rec.at("type").get<std::string>();
    if (type == "intent") intents[rec.at("seq").get<std::uint64_t>()] = rec.at("decision").get<AnalystDecision>();
    if (type == "commit") {
      const auto& d = intents.at(rec.at("txn").get<std::uint64_t>());
      if (d.decision == Decision::Confirm) confirmed.insert(d.report_id);
    }
  }

  const auto snap = index_.snapshot();
  std::set<std::string> indexed;
  for (const auto& c : snap->cases) {
    indexed.insert(case_key(c->app_id, c->risk_category));
    if (c->origin != retrieval::CaseOrigin::AnalystConfirmed) continue;
    ++a.confirmed_cases;
    if (!confirmed.count(c->source_ref)) a.orphan_cases.push_back(case_key(c->app_id, c->risk_category));
  }
  for (const auto& [rid, d] : decisions_) {
    if (d.decision != Decision::Confirm) continue;
    ++a.committed_confirms;
    const auto& r = reports_.at(by_id_.at(rid));
    const auto app_id = r.outcome.at("app_id").get<std::string>();
    for (const auto& cat : report_categories(r)) {
      if (!indexed.count(app_id + "/" + cat)) a.orphan_decisions.push_back(rid + ":" + cat);
    }
  }
  return a;
}

}  // namespace apprisk::service
