#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/proposer.hpp"

namespace medfeat::proposer {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute http(s) URL: '" + url + "'");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("https endpoints need a build with MEDFEAT_WITH_TLS");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpChatProposer::HttpChatProposer(HttpConfig config) : config_(std::move(config)) {
  split_endpoint(config_.endpoint);
  if (config_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

std::string HttpChatProposer::complete(const PromptBundle& prompt) {
  const char* key = std::getenv(kApiKeyEnv);
  if (!key || !*key) throw ConfigError(std::string("environment variable ") + kApiKeyEnv + " is not set");
  const Endpoint endpoint = split_endpoint(config_.endpoint);

  PromptBundle user = prompt;
  user.preamble.clear();
  std::string user_text = user.render();
  while (!user_text.empty() && (user_text.front() == '\n')) user_text.erase(user_text.begin());
  const nlohmann::json body{{"model", config_.model},
                            {"messages",
                             {{{"role", "system"}, {"content", prompt.preamble}},
                              {{"role", "user"}, {"content", user_text}}}},
                            {"temperature", config_.temperature},
                            {"n", 1}};
  const std::string payload = body.dump();

  httplib::Client client(endpoint.origin);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_bearer_token_auth(key);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && config_.backoff_seconds > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(config_.backoff_seconds * std::pow(2.0, attempt - 1)));
    }
    ++requests_sent_;
    const auto res = client.Post(endpoint.path, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "server returned status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw GenerationFailure("endpoint returned status " + std::to_string(res->status));
    try {
      const auto doc = nlohmann::json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw GenerationFailure(std::string("malformed chat response: ") + e.what());
    }
  }
  throw GenerationFailure("request failed after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

std::string HttpChatProposer::propose(const ProposalRequest& request) {
  return extract_fenced_block(complete(request.prompt));
}

}  // namespace medfeat::proposer
