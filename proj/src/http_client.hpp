#pragma once

// Internal JSON-over-HTTP helper shared by the completion backend and the
// quality scorer client.

#include <chrono>
#include <string>

#include <json.hpp>

namespace ugap::detail {

struct Endpoint {
  std::string scheme_host_port;  // "http://host:port"
  std::string path_prefix;       // "" or "/v1"
};

Endpoint parse_url(const std::string& url);

struct RetryPolicy {
  std::size_t max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
};

/// POSTs `body` and returns the parsed JSON response. Transport failures and
/// 5xx responses are retried with exponential backoff; other non-2xx
/// responses throw a non-retryable TransportError immediately.
nlohmann::json post_json(const Endpoint& endpoint, const std::string& path,
                         const nlohmann::json& body, const std::string& api_key,
                         std::chrono::milliseconds timeout, const RetryPolicy& retry);

}  // namespace ugap::detail
