#include <cstdlib>

#include <httplib.h>

#include "apprisk/llm/gateway.hpp"

namespace apprisk::llm {

std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("base url without scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path), prefix};
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  split_base_url(config_.base_url);
}

BackendReply HttpBackend::generate(const CompletionRequest& request) {
  const auto [host, prefix] = split_base_url(config_.base_url);
  httplib::Client client(host);
  client.set_connection_timeout(10);
  client.set_read_timeout(config_.timeout_seconds);

  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const json body{{"model", config_.model},
                  {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_tokens}};

  auto res = client.Post(prefix + "/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw RetryableError("llm endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw RetryableError("llm endpoint returned " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw TerminalError("llm endpoint returned " + std::to_string(res->status) + ": " + res->body);
  }

  const json doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
    throw TerminalError("llm endpoint returned an unexpected envelope");
  }
  BackendReply reply;
  reply.text = doc["choices"][0]["message"].value("content", "");
  if (auto it = doc.find("usage"); it != doc.end() && it->is_object()) {
    if (it->contains("prompt_tokens")) reply.prompt_tokens = (*it)["prompt_tokens"].get<std::size_t>();
    if (it->contains("completion_tokens")) {
      reply.completion_tokens = (*it)["completion_tokens"].get<std::size_t>();
    }
  }
  return reply;
}

}  // namespace apprisk::llm
