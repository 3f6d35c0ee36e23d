#include "http_client.hpp"

#include <thread>

#include <httplib.h>

#include "ugap/errors.hpp"

namespace ugap::detail {

Endpoint parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string::npos) {
    ep.scheme_host_port = url;
  } else {
    ep.scheme_host_port = url.substr(0, path_start);
    ep.path_prefix = url.substr(path_start);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

nlohmann::json post_json(const Endpoint& endpoint, const std::string& path,
                         const nlohmann::json& body, const std::string& api_key,
                         std::chrono::milliseconds timeout, const RetryPolicy& retry) {
  const std::string payload = body.dump();
  auto backoff = retry.initial_backoff;
  std::string last_error;
  for (std::size_t attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    httplib::Client client(endpoint.scheme_host_port);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    } else if (res->status < 200 || res->status >= 300) {
      throw TransportError(path + ": HTTP " + std::to_string(res->status) + ": " + res->body,
                           false);
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw TransportError(path + ": response is not JSON: " + e.what(), false);
      }
    }
    if (attempt < retry.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(path + ": giving up after " + std::to_string(retry.max_attempts) +
                           " attempts: " + last_error,
                       true);
}

}  // namespace ugap::detail
