#include "apprisk/llm/gateway.hpp"

#include <set>
#include <thread>

namespace apprisk::llm {

std::string_view to_string(Phase p) {
  return p == Phase::Identification ? "identification" : "evidence_generation";
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

void to_json(json& j, const UsageStats& u) {
  j = json{{"prompt_tokens", u.prompt_tokens},
           {"completion_tokens", u.completion_tokens},
           {"total_tokens", u.total_tokens()},
           {"latency", u.latency}};
}

void from_json(const json& j, UsageStats& u) {
  u.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  u.completion_tokens = j.value("completion_tokens", std::size_t{0});
  u.latency = j.value("latency", 0.0);
}

void to_json(json& j, const PhaseTotals& t) {
  j = json{{"total", t.total},
           {"calls", t.calls},
           {"apps", t.apps},
           {"avg_tokens_per_app", t.avg_tokens_per_app},
           {"avg_latency_per_app", t.avg_latency_per_app}};
}

void to_json(json& j, const UsageSummary& s) {
  j = json{{"identification", s.identification},
           {"evidence_generation", s.evidence_generation},
           {"apps", s.apps},
           {"avg_tokens_per_app", s.avg_tokens_per_app},
           {"avg_latency_per_app", s.avg_latency_per_app}};
}

void UsageLedger::record(const UsageStats& stats, Phase phase, const std::string& app_id) {
  std::lock_guard lock(mu_);
  Bucket& b = phase == Phase::Identification ? id_ : ev_;
  b.total += stats;
  ++b.calls;
  if (app_id.empty()) {
    ++b.anonymous;
  } else {
    b.per_app[app_id] += stats;
  }
}

PhaseTotals UsageLedger::totals_locked(const Bucket& b) const {
  PhaseTotals t;
  t.total = b.total;
  t.calls = b.calls;
  t.apps = b.per_app.size() + b.anonymous;
  if (t.apps > 0) {
    t.avg_tokens_per_app = static_cast<double>(b.total.total_tokens()) / static_cast<double>(t.apps);
    t.avg_latency_per_app = b.total.latency / static_cast<double>(t.apps);
  }
  return t;
}

PhaseTotals UsageLedger::totals(Phase phase) const {
  std::lock_guard lock(mu_);
  return totals_locked(phase == Phase::Identification ? id_ : ev_);
}

UsageSummary UsageLedger::summary() const {
  std::lock_guard lock(mu_);
  UsageSummary s;
  s.identification = totals_locked(id_);
  s.evidence_generation = totals_locked(ev_);
  std::set<std::string> apps;
  for (const auto& [k, _] : id_.per_app) apps.insert(k);
  for (const auto& [k, _] : ev_.per_app) apps.insert(k);
  s.apps = apps.size() + id_.anonymous + ev_.anonymous;
  if (s.apps > 0) {
    const double tokens =
        static_cast<double>(id_.total.total_tokens() + ev_.total.total_tokens());
    s.avg_tokens_per_app = tokens / static_cast<double>(s.apps);
    s.avg_latency_per_app = (id_.total.latency + ev_.total.latency) / static_cast<double>(s.apps);
  }
  return s;
}

void UsageLedger::merge(const UsageLedger& other) {
  if (&other == this) return;
  std::scoped_lock lock(mu_, other.mu_);
  auto fold = [](Bucket& into, const Bucket& from) {
    into.total += from.total;
    into.calls += from.calls;
    into.anonymous += from.anonymous;
    for (const auto& [k, v] : from.per_app) into.per_app[k] += v;
  };
  fold(id_, other.id_);
  fold(ev_, other.ev_);
}

void UsageLedger::clear() {
  std::lock_guard lock(mu_);
  id_ = {};
  ev_ = {};
}

Gateway::Gateway(GatewayOptions options)
    : options_(options), slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options.max_in_flight))) {
  if (options_.max_in_flight == 0 || options_.max_in_flight > 1024) {
    throw Error("max_in_flight must be in [1, 1024]");
  }
}

void Gateway::register_backend(const std::string& id, std::shared_ptr<Backend> backend) {
  if (!backend) throw Error("null backend for '" + id + "'");
  backends_[id] = std::move(backend);
  if (default_backend_.empty()) default_backend_ = id;
}

bool Gateway::has_backend(const std::string& id) const { return backends_.count(id) > 0; }

void Gateway::set_default_backend(const std::string& id) {
  if (!has_backend(id)) throw Error("unknown backend '" + id + "'");
  default_backend_ = id;
}

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

Completion Gateway::complete(const CompletionRequest& request, const CallTag& tag) {
  const std::string& id = request.backend_id.empty() ? default_backend_ : request.backend_id;
  auto it = backends_.find(id);
  if (it == backends_.end()) throw Error("unknown backend '" + id + "'");
  if (request.temperature < 0.0 || request.temperature > 1.0) {
    throw Error("temperature must be in [0, 1]");
  }

  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.retry_backoff * attempt);
    BackendReply reply;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      SlotGuard slot(slots_);
      ++backend_calls_;
      reply = it->second->generate(request);
    } catch (const RetryableError& e) {
      last_error = e.what();
      continue;
    } catch (const TerminalError&) {
      throw;
    } catch (const std::exception& e) {
      throw TerminalError("backend '" + id + "': " + e.what());
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Completion c;
    c.text = std::move(reply.text);
    c.usage.prompt_tokens = reply.prompt_tokens.value_or(estimate_tokens(request.prompt));
    c.usage.completion_tokens = reply.completion_tokens.value_or(estimate_tokens(c.text));
    c.usage.latency = reply.latency.value_or(wall);
    usage_.record(c.usage, tag.phase, tag.app_id);
    if (tag.sink) tag.sink->record(c.usage, tag.phase, tag.app_id);
    return c;
  }
  throw TerminalError("backend '" + id + "' failed after " +
                      std::to_string(options_.max_retries + 1) + " attempts: " + last_error);
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses, int fail_first,
                                 bool fail_terminal)
    : responses_(std::move(responses)), fail_remaining_(fail_first), fail_terminal_(fail_terminal) {}

BackendReply ScriptedBackend::generate(const CompletionRequest&) {
  ++calls_;
  if (fail_remaining_.load() > 0 && fail_remaining_.fetch_sub(1) > 0) {
    if (fail_terminal_) throw TerminalError("scripted terminal failure");
    throw RetryableError("scripted transient failure");
  }
  BackendReply r;
  r.latency = 0.0;
  const std::size_t n = served_++;
  if (!responses_.empty()) r.text = responses_[n % responses_.size()];
  return r;
}

}  // namespace apprisk::llm
