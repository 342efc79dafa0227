#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::retrieval {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSnapshotFormat = "apprisk-case-index";
constexpr int kSnapshotFormatVersion = 1;
constexpr const char* kSnapshotFile = "cases.snapshot.jsonl";
constexpr const char* kLogFile = "cases.log.jsonl";

void write_all_fsync(const fs::path& path, const std::string& data, bool append) {
  const int flags = O_WRONLY | O_CREAT | O_CLOEXEC | (append ? O_APPEND : O_TRUNC);
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw Error("open " + path.string() + ": " + std::strerror(errno));
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error("write " + path.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error("fsync " + path.string() + ": " + std::strerror(errno));
  }
  ::close(fd);
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

std::string_view to_string(CaseOrigin o) {
  return o == CaseOrigin::SeedCorpus ? "seed_corpus" : "analyst_confirmed";
}

CaseOrigin case_origin_from_string(std::string_view s) {
  if (s == "seed_corpus") return CaseOrigin::SeedCorpus;
  if (s == "analyst_confirmed") return CaseOrigin::AnalystConfirmed;
  throw Error("unknown case origin '" + std::string(s) + "'");
}

void to_json(json& j, const DelistedCase& c) {
  j = json{{"app_id", c.app_id},
           {"app_name", c.app_name},
           {"risk_category", c.risk_category},
           {"indicators", c.indicators},
           {"groups", c.groups},
           {"snippet_text", c.snippet_text},
           {"delisted_at", c.delisted_at},
           {"origin", to_string(c.origin)}};
  if (!c.source_ref.empty()) j["source_ref"] = c.source_ref;
  if (!c.embedding.values.empty()) j["embedding"] = c.embedding.values;
}

void from_json(const json& j, DelistedCase& c) {
  c.app_id = j.at("app_id").get<std::string>();
  c.app_name = j.value("app_name", std::string{});
  c.risk_category = j.at("risk_category").get<RiskCategory>();
  c.indicators = j.at("indicators").get<std::vector<std::string>>();
  c.groups = j.value("groups", std::vector<FeatureGroupId>{});
  c.snippet_text = j.at("snippet_text").get<std::string>();
  c.delisted_at = j.value("delisted_at", std::int64_t{0});
  c.origin = case_origin_from_string(j.value("origin", std::string("seed_corpus")));
  c.embedding.values = j.value("embedding", std::vector<double>{});
  c.source_ref = j.value("source_ref", std::string{});
}

std::vector<std::string> validate_case(const DelistedCase& c, std::size_t dim) {
  std::vector<std::string> issues;
  if (c.app_id.empty()) issues.push_back("app_id empty");
  if (c.indicators.empty()) issues.push_back("indicators empty");
  for (const auto& i : c.indicators) {
    if (!is_canonical_indicator(i)) issues.push_back("indicator '" + i + "' not canonical");
  }
  if (c.embedding.dim() != dim) {
    issues.push_back("embedding dimension mismatch: " + std::to_string(c.embedding.dim()) +
                     " vs index " + std::to_string(dim));
  }
  return issues;
}

std::vector<DelistedCase> load_cases_jsonl(const std::string& path, const Embedder& embedder,
                                           const IndicatorNormalizer& normalizer) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open case file " + path);
  std::vector<DelistedCase> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      DelistedCase c = json::parse(line).get<DelistedCase>();
      c.indicators = normalizer.normalize_all(c.indicators);
      std::sort(c.groups.begin(), c.groups.end());
      if (c.embedding.values.empty()) c.embedding = embed_text(embedder, c.snippet_text);
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void to_json(json& j, const IndexStats& s) {
  json per_cat = json::object();
  for (auto c : kAllRiskCategories) {
    auto it = s.per_category.find(c);
    per_cat[std::string(to_string(c))] = it == s.per_category.end() ? 0 : it->second;
  }
  json per_origin = json::object();
  for (auto o : {CaseOrigin::SeedCorpus, CaseOrigin::AnalystConfirmed}) {
    auto it = s.per_origin.find(o);
    per_origin[std::string(to_string(o))] = it == s.per_origin.end() ? 0 : it->second;
  }
  j = json{{"version", s.version},
           {"dim", s.dim},
           {"total", s.total},
           {"per_category", per_cat},
           {"per_origin", per_origin}};
}

CaseIndex::CaseIndex(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error("index dimension must be positive");
  auto s = std::make_shared<Snapshot>();
  s->dim = dim_;
  snap_ = std::move(s);
}

std::unique_ptr<CaseIndex> CaseIndex::open(const fs::path& dir, std::size_t dim) {
  fs::create_directories(dir);
  auto index = std::make_unique<CaseIndex>(dim);
  index->dir_ = dir;
  auto snap = std::make_shared<Snapshot>();
  snap->dim = dim;

  const fs::path snap_path = dir / kSnapshotFile;
  if (fs::exists(snap_path)) {
    std::ifstream in(snap_path);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty index snapshot " + snap_path.string());
    const json header = json::parse(line);
    if (header.value("format", std::string{}) != kSnapshotFormat ||
        header.value("format_version", 0) != kSnapshotFormatVersion) {
      throw Error("unsupported index snapshot format in " + snap_path.string());
    }
    if (header.at("dim").get<std::size_t>() != dim) {
      throw Error("index snapshot dimension " + header.at("dim").dump() + " does not match " +
                  std::to_string(dim));
    }
    snap->version = header.at("version").get<std::uint64_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      snap->cases.push_back(std::make_shared<const DelistedCase>(json::parse(line).get<DelistedCase>()));
    }
    if (snap->cases.size() != header.value("count", snap->cases.size())) {
      throw Error("index snapshot truncated: " + snap_path.string());
    }
  }

  const fs::path log_path = dir / kLogFile;
  if (fs::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t good_end = 0;
    while (pos < content.size()) {
      const std::size_t nl = content.find('\n', pos);
      const bool complete = nl != std::string::npos;
      const std::string line = content.substr(pos, complete ? nl - pos : std::string::npos);
      const json entry = json::parse(line, nullptr, false);
      if (!complete || entry.is_discarded()) {
        if (complete && content.find('\n', nl + 1) != std::string::npos) {
          throw Error("corrupt index log line in the middle of " + log_path.string());
        }
        break;  // torn tail
      }
      const auto seq = entry.at("seq").get<std::uint64_t>();
      if (seq > snap->version) {
        if (seq != snap->version + 1) throw Error("index log gap at seq " + std::to_string(seq));
        snap->cases.push_back(std::make_shared<const DelistedCase>(entry.at("case").get<DelistedCase>()));
        snap->version = seq;
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end < content.size()) fs::resize_file(log_path, good_end);
  }
  index->snap_ = std::move(snap);
  return index;
}

std::shared_ptr<const CaseIndex::Snapshot> CaseIndex::snapshot() const {
  std::shared_lock lock(mu_);
  return snap_;
}

std::uint64_t CaseIndex::version() const { return snapshot()->version; }
std::size_t CaseIndex::size() const { return snapshot()->cases.size(); }

bool CaseIndex::contains(const std::string& app_id, RiskCategory category) const {
  const auto snap = snapshot();
  return std::any_of(snap->cases.begin(), snap->cases.end(), [&](const auto& c) {
    return c->app_id == app_id && c->risk_category == category;
  });
}

void CaseIndex::check(const DelistedCase& c) const { check_appendable(c, *snapshot()); }

void CaseIndex::check_appendable(const DelistedCase& c, const Snapshot& snap) const {
  if (c.embedding.dim() != dim_) {
    throw Error("embedding dimension mismatch: " + std::to_string(c.embedding.dim()) + " vs index " +
                std::to_string(dim_));
  }
  if (auto issues = validate_case(c, dim_); !issues.empty()) {
    throw Error("invalid case '" + c.app_id + "': " + issues.front());
  }
  for (const auto& existing : snap.cases) {
    if (existing->app_id == c.app_id && existing->risk_category == c.risk_category) {
      throw Error("case " + c.app_id + "/" + std::string(to_string(c.risk_category)) +
                  " already indexed");
    }
  }
}

std::uint64_t CaseIndex::append(DelistedCase c) {
  std::lock_guard write(write_mu_);
  const auto current = snapshot();
  check_appendable(c, *current);

  auto next = std::make_shared<Snapshot>(*current);
  next->version = current->version + 1;
  auto stored = std::make_shared<const DelistedCase>(std::move(c));
  if (dir_) {
    const json entry{{"seq", next->version}, {"case", *stored}};
    write_all_fsync(*dir_ / kLogFile, entry.dump() + "\n", true);
  }
  next->cases.push_back(std::move(stored));
  const auto v = next->version;
  std::unique_lock lock(mu_);
  snap_ = std::move(next);
  return v;
}

void CaseIndex::compact() {
  if (!dir_) return;
  std::lock_guard write(write_mu_);
  const auto snap = snapshot();
  std::string data = json{{"format", kSnapshotFormat},
                          {"format_version", kSnapshotFormatVersion},
                          {"dim", dim_},
                          {"version", snap->version},
                          {"count", snap->cases.size()}}
                         .dump() +
                     "\n";
  for (const auto& c : snap->cases) data += json(*c).dump() + "\n";
  const fs::path tmp = *dir_ / (std::string(kSnapshotFile) + ".tmp");
  write_all_fsync(tmp, data, false);
  fs::rename(tmp, *dir_ / kSnapshotFile);
  fsync_dir(*dir_);
  // Entries at or below the snapshot version are skipped on replay, so a crash
  // between rename and truncate is harmless.
  write_all_fsync(*dir_ / kLogFile, "", false);
}

IndexStats CaseIndex::stats() const {
  const auto snap = snapshot();
  IndexStats s;
  s.version = snap->version;
  s.dim = dim_;
  s.total = snap->cases.size();
  for (const auto& c : snap->cases) {
    ++s.per_category[c->risk_category];
    ++s.per_origin[c->origin];
  }
  return s;
}

fs::path CaseIndex::snapshot_path() const { return dir_ ? *dir_ / kSnapshotFile : fs::path{}; }
fs::path CaseIndex::log_path() const { return dir_ ? *dir_ / kLogFile : fs::path{}; }

std::vector<ScoredCase> query_top_k(const CaseIndex::Snapshot& snapshot, const Embedding& query,
                                    std::size_t k, std::optional<RiskCategory> category) {
  if (k == 0) throw Error("k must be at least 1");
  if (query.dim() != snapshot.dim) {
    throw Error("embedding dimension mismatch: " + std::to_string(query.dim()) + " vs index " +
                std::to_string(snapshot.dim));
  }
  std::vector<ScoredCase> scored;
  scored.reserve(snapshot.cases.size());
  for (const auto& c : snapshot.cases) {
    if (category && c->risk_category != *category) continue;
    scored.push_back({c, cosine_similarity(query, c->embedding)});
  }
  auto better = [](const ScoredCase& a, const ScoredCase& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.item->app_id != b.item->app_id) return a.item->app_id < b.item->app_id;
    return a.item->risk_category < b.item->risk_category;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  scored.resize(n);
  return scored;
}

}  // namespace apprisk::retrieval
