#include <cctype>
#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "apprisk/core/hash.hpp"
#include "apprisk/llm/gateway.hpp"
#include "apprisk/retrieval/retrieval.hpp"

namespace apprisk::retrieval {

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw Error("embedding dimension must be positive");
}

std::string HashingEmbedder::id() const {
  return "hashing:" + std::to_string(dim_) + ":" + hex64(seed_);
}

Embedding HashingEmbedder::embed(const std::string& text) const {
  Embedding e;
  e.values.assign(dim_, 0.0);
  const std::uint64_t basis = fnv1a64(hex64(seed_));
  auto add = [&](std::string_view feature, double weight) {
    const std::uint64_t h = fnv1a64(feature, basis);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    e.values[h % dim_] += sign * weight;
  };

  std::string word;
  bool any = false;
  auto flush = [&] {
    if (word.empty()) return;
    add("w:" + word, 1.0);
    const std::string padded = "#" + word + "#";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add("c:" + padded.substr(i, 3), 0.5);
    word.clear();
    any = true;
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      flush();
    }
  }
  flush();
  // Punctuation-only text still gets a non-zero vector.
  if (!any) add("raw:" + text, 1.0);
  return e;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
  llm::split_base_url(config_.base_url);
}

Embedding RemoteEmbedder::embed(const std::string& text) const {
  const auto [host, prefix] = llm::split_base_url(config_.base_url);
  httplib::Client client(host);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const json body{{"model", config_.model}, {"input", text}};
  auto res = client.Post(prefix + "/v1/embeddings", headers, body.dump(), "application/json");
  if (!res) throw llm::RetryableError("embedding endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("embedding endpoint returned " + std::to_string(res->status));
  const json doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("data") || doc["data"].empty()) {
    throw Error("embedding endpoint returned an unexpected envelope");
  }
  Embedding e;
  e.values = doc["data"][0].at("embedding").get<std::vector<double>>();
  if (e.dim() != config_.dim) {
    throw Error("embedding endpoint returned dim " + std::to_string(e.dim()) + ", configured " +
                std::to_string(config_.dim));
  }
  return e;
}

Embedding embed_text(const Embedder& embedder, const std::string& text) {
  if (text.empty()) throw Error("cannot embed empty text");
  return embedder.embed(text);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error("embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine similarity of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace apprisk::retrieval
