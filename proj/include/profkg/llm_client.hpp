#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
// resolv.h defines _res, which Eigen uses as a parameter name.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "profkg/error.hpp"
#include "profkg/prompt.hpp"

namespace profkg {

struct LlmClientConfig {
  std::string endpoint_url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model_name;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  double request_timeout_seconds = 60.0;
  int max_parallel_requests = 4;
  std::string api_key_env = "OPENAI_API_KEY";  // empty: no Authorization header
};

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;
};

inline ParsedUrl parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::config_missing, "endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline nlohmann::json chat_request_body(const std::string& model, const PromptBundle& bundle) {
  return {{"model", model},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", bundle.system}},
                                  {{"role", "user"}, {"content", bundle.user_message}}})}};
}

// One chat-completion request with 429 retries (exponential backoff).
inline std::string llm_complete(const LlmClientConfig& config, const PromptBundle& bundle) {
  if (config.max_retries < 0 || config.max_parallel_requests < 1)
    throw Error(ErrorCode::config_missing, "max_retries >= 0 and max_parallel_requests >= 1 required");
  if (config.endpoint_url.empty()) throw Error(ErrorCode::config_missing, "llm endpoint url");

  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key)
      throw Error(ErrorCode::config_missing, "environment variable " + config.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const ParsedUrl url = parse_endpoint(config.endpoint_url);
  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(config.request_timeout_seconds);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
  client.set_connection_timeout(sec.count(), usec.count());
  client.set_read_timeout(sec.count(), usec.count());
  client.set_write_timeout(sec.count(), usec.count());

  const std::string body = chat_request_body(config.model_name, bundle).dump();
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write)
        throw Error(ErrorCode::timeout, httplib::to_string(err));
      throw Error(ErrorCode::http_error, "transport: " + httplib::to_string(err));
    }
    if (res->status == 429) {
      if (attempt >= config.max_retries)
        throw Error(ErrorCode::rate_limited, "gave up after " + std::to_string(attempt + 1) + " attempts");
      std::this_thread::sleep_for(
          std::chrono::duration<double>(config.backoff_base_seconds * std::pow(2.0, attempt)));
      continue;
    }
    if (res->status < 200 || res->status >= 300) throw HttpError(res->status, res->body.substr(0, 200));

    std::string content;
    try {
      auto j = nlohmann::json::parse(res->body);
      const auto& msg = j.at("choices").at(0).at("message").at("content");
      if (msg.is_string()) content = msg.get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::empty_completion, "malformed completion response");
    }
    if (content.empty()) throw Error(ErrorCode::empty_completion, "completion content is empty");
    return content;
  }
}

}  // namespace profkg
