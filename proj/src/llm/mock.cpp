#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "apprisk/llm/gateway.hpp"

namespace apprisk::llm {

void MockBackend::on(std::string marker, Handler handler) {
  handlers_.emplace_back(std::move(marker), std::move(handler));
}

void MockBackend::set_fallback(Handler handler) { fallback_ = std::move(handler); }

BackendReply MockBackend::generate(const CompletionRequest& request) {
  BackendReply reply;
  reply.latency = 0.0;
  for (const auto& [marker, handler] : handlers_) {
    if (request.prompt.find(marker) != std::string::npos) {
      reply.text = handler(request.prompt);
      return reply;
    }
  }
  if (fallback_) {
    reply.text = fallback_(request.prompt);
    return reply;
  }
  throw TerminalError("mock backend: no handler for prompt");
}

MockVocabulary MockVocabulary::defaults() {
  MockVocabulary v;
  v.risk_factors = {
      {"advertising-related", {"ad", "ads", "advert*", "pops", "popup*", "banner*"}},
      {"content-anomaly", {"porn*", "gambl*", "vulgar", "obscene", "explicit", "inappropriate"}},
      {"functional-issue", {"crash*", "freez*", "broken", "bug", "bugs", "unusable"}},
      {"privacy", {"privacy", "contacts", "tracking", "spying", "spyware"}},
      {"payment-fraud", {"withdraw*", "wallet*", "scam*", "refund*", "payment*", "charged"}},
      {"other", {}},
  };
  v.positive_words = {"great", "love", "excellent", "good", "useful", "nice", "perfect", "smooth", "helpful"};
  v.topic_categories = {
      {"game*", {"Games"}},
      {"withdraw*", {"Finance"}},
      {"wallet*", {"Finance", "Shopping"}},
      {"payment*", {"Finance", "Shopping"}},
      {"casino*", {"Games"}},
      {"loan*", {"Finance"}},
      {"lottery", {"Games", "Finance"}},
      {"dating", {"Social"}},
  };
  return v;
}

MockVocabulary MockVocabulary::from_json(const json& doc) {
  MockVocabulary v;
  for (const auto& f : doc.at("risk_factors")) {
    v.risk_factors.emplace_back(f.at("factor").get<std::string>(),
                                f.value("triggers", std::vector<std::string>{}));
  }
  v.positive_words = doc.value("positive_words", std::vector<std::string>{});
  if (doc.contains("topic_categories")) {
    v.topic_categories = doc.at("topic_categories").get<std::map<std::string, std::vector<std::string>>>();
  }
  if (v.risk_factors.empty()) throw Error("mock vocabulary has no risk factors");
  return v;
}

namespace {

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// "stem*" matches by prefix, anything else matches the whole word.
bool word_matches(const std::string& word, const std::string& trigger) {
  if (!trigger.empty() && trigger.back() == '*') {
    return word.compare(0, trigger.size() - 1, trigger, 0, trigger.size() - 1) == 0;
  }
  return word == trigger;
}

bool any_word_matches(const std::vector<std::string>& words, const std::string& trigger) {
  return std::any_of(words.begin(), words.end(),
                     [&](const std::string& w) { return word_matches(w, trigger); });
}

/// Content between "<<<NAME\n" and "\nNAME>>>", or empty.
std::string block(const std::string& prompt, const std::string& name) {
  const std::string open = "<<<" + name + "\n";
  const std::string close = "\n" + name + ">>>";
  const auto a = prompt.rfind(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = prompt.find(close, start);
  if (b == std::string::npos) return {};
  return prompt.substr(start, b - start);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// Strips a leading "N. " and surrounding quotes from one comment line.
std::string strip_comment(std::string line) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && line[i] == '.') line = line.substr(i + 1);
  while (!line.empty() && (line.front() == ' ' || line.front() == '"')) line.erase(line.begin());
  while (!line.empty() && (line.back() == ' ' || line.back() == '"')) line.pop_back();
  return line;
}

std::string display_factor(std::string factor) {
  if (!factor.empty()) factor[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(factor[0])));
  return factor;
}

std::string clip(const std::string& s, std::size_t n) {
  if (s.size() <= n) return s;
  std::size_t cut = s.rfind(' ', n);
  if (cut == std::string::npos || cut < n / 2) cut = n;
  return s.substr(0, cut) + "...";
}

std::string feedback_reply(const MockVocabulary& vocab, const std::string& prompt) {
  std::vector<std::size_t> factor_hits(vocab.risk_factors.size(), 0);
  std::vector<std::string> risky;
  bool positive = false;
  for (const auto& raw : lines_of(block(prompt, "INPUT"))) {
    const std::string comment = strip_comment(raw);
    const auto words = words_of(comment);
    bool hit = false;
    for (std::size_t f = 0; f < vocab.risk_factors.size(); ++f) {
      const auto& triggers = vocab.risk_factors[f].second;
      if (std::any_of(triggers.begin(), triggers.end(),
                      [&](const std::string& t) { return any_word_matches(words, t); })) {
        ++factor_hits[f];
        hit = true;
      }
    }
    if (hit) risky.push_back(clip(comment, 60));
    for (const auto& p : vocab.positive_words) positive = positive || any_word_matches(words, p);
  }

  std::size_t best = vocab.risk_factors.size() - 1;
  std::size_t best_hits = 0;
  for (std::size_t f = 0; f < factor_hits.size(); ++f) {
    if (factor_hits[f] > best_hits) {
      best = f;
      best_hits = factor_hits[f];
    }
  }

  json out;
  out["Quality"] = risky.size() >= 2 ? "High" : risky.size() == 1 ? "Medium" : "Low";
  out["Tendency"] = !risky.empty() ? "Negative" : positive ? "Positive" : "Neutral";
  std::string joined;
  for (const auto& r : risky) joined += (joined.empty() ? "" : " | ") + r;
  out["RiskInfo"] = {{"Snippets", joined},
                     {"Risk Factor", risky.empty() ? std::string("Other")
                                                   : display_factor(vocab.risk_factors[best].first)}};
  return "<think>\nReading each comment and sorting complaints by factor.\n</think>\n" + out.dump(2);
}

std::string field_line(const std::string& text, const std::string& key) {
  for (const auto& line : lines_of(text)) {
    if (line.rfind(key, 0) == 0) {
      std::string v = line.substr(key.size());
      while (!v.empty() && v.front() == ' ') v.erase(v.begin());
      return v;
    }
  }
  return {};
}

std::string discrepancy_reply(const MockVocabulary& vocab, const std::string& prompt) {
  const std::string input = block(prompt, "INPUT");
  const std::string declared = field_line(input, "Declared category:");
  const auto words = words_of(block(prompt, "TEXT"));

  std::vector<std::string> observed;
  for (const auto& [stem, categories] : vocab.topic_categories) {
    if (!any_word_matches(words, stem)) continue;
    const bool expected = std::find(categories.begin(), categories.end(), declared) != categories.end();
    if (!expected) observed.push_back(stem.back() == '*' ? stem.substr(0, stem.size() - 1) : stem);
  }
  // One stray off-topic word is common in honest feedback; two distinct topics are not.
  const bool mismatch = observed.size() >= 2;
  json out{{"Mismatch", mismatch},
           {"DeclaredCategory", declared},
           {"ObservedTopics", mismatch ? observed : std::vector<std::string>{}}};
  std::string expl = "Feedback and description are consistent with the declared category.";
  if (mismatch) {
    expl = "Declared as " + declared + " but users discuss ";
    for (std::size_t i = 0; i < observed.size(); ++i) {
      expl += (i == 0 ? "" : i + 1 == observed.size() ? " and " : ", ") + observed[i];
    }
    expl += ".";
  }
  out["Explanation"] = expl;
  return out.dump();
}

std::string canon(std::string s) {
  for (auto& c : s) c = c == ' ' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string similar_pattern_reply(const std::string& prompt) {
  const json records = json::parse("{" + block(prompt, "RECORDS") + "}", nullptr, false);
  const json target = json::parse("{" + block(prompt, "TARGET") + "}", nullptr, false);
  json out = json::object();
  if (records.is_discarded() || target.is_discarded() || target.empty()) return out.dump();
  std::set<std::string> want;
  for (const auto& t : target.begin().value()) want.insert(canon(t.get<std::string>()));
  for (const auto& [id, indicators] : records.items()) {
    std::size_t shared = 0;
    for (const auto& i : indicators) shared += want.count(canon(i.get<std::string>()));
    if (shared >= 2) out[id] = indicators;
  }
  return out.dump();
}

std::string narrative_reply(const std::string& prompt) {
  // Evidence lines: "RISK <display> :: <group>; <group>"
  std::string text;
  for (const auto& line : lines_of(block(prompt, "EVIDENCE"))) {
    if (line.rfind("RISK ", 0) != 0) continue;
    const auto sep = line.find(" :: ");
    if (sep == std::string::npos) continue;
    const std::string risk = line.substr(5, sep - 5);
    std::string groups = line.substr(sep + 4);
    std::string pretty;
    std::istringstream in(groups);
    std::vector<std::string> parts;
    std::string part;
    while (std::getline(in, part, ';')) {
      while (!part.empty() && part.front() == ' ') part.erase(part.begin());
      if (!part.empty()) parts.push_back(part);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
      pretty += (i == 0 ? "" : i + 1 == parts.size() ? " and " : ", ") + parts[i];
    }
    if (!text.empty()) text += " ";
    text += "Evidence from " + pretty + " points to a [" + risk + "] risk.";
  }
  if (text.empty()) text = "No corroborated risk was found.";
  return text;
}

}  // namespace

std::shared_ptr<MockBackend> make_rule_backed_mock(MockVocabulary vocab) {
  auto mock = std::make_shared<MockBackend>();
  auto shared_vocab = std::make_shared<const MockVocabulary>(std::move(vocab));
  mock->on(task_markers::kUserFeedback,
           [shared_vocab](const std::string& p) { return feedback_reply(*shared_vocab, p); });
  mock->on(task_markers::kDiscrepancy,
           [shared_vocab](const std::string& p) { return discrepancy_reply(*shared_vocab, p); });
  mock->on(task_markers::kSimilarPattern, similar_pattern_reply);
  mock->on(task_markers::kNarrative, narrative_reply);
  return mock;
}

}  // namespace apprisk::llm
