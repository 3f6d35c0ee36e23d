#include "ugap/http_backend.hpp"

#include <algorithm>
#include <cstdlib>

#include "http_client.hpp"
#include "ugap/errors.hpp"

namespace ugap {

using json = nlohmann::json;

namespace {

TopK parse_top_logprobs(const json& entry, std::size_t k) {
  TopK top;
  if (!entry.is_object()) return top;
  for (const auto& [token, logprob] : entry.items()) {
    if (logprob.is_number()) top.emplace_back(token, logprob.get<double>());
  }
  std::stable_sort(top.begin(), top.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top.size() > k) top.resize(k);
  return top;
}

const json& logprobs_block(const json& response) {
  if (!response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw TransportError("completion response has no choices", false);
  }
  const json& choice = response["choices"][0];
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw TransportError("completion response has no logprobs", false);
  }
  const json& lp = choice["logprobs"];
  for (const char* field : {"tokens", "token_logprobs", "top_logprobs"}) {
    if (!lp.contains(field) || !lp[field].is_array()) {
      throw TransportError(std::string("completion logprobs lack ") + field, false);
    }
  }
  return lp;
}

// Offsets reported by OpenAI-style servers count code points, not bytes.
std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

void BackendConfig::validate() const {
  if (base_url.empty()) throw ConfigError("backend base_url is empty");
  if (model.empty()) throw ConfigError("backend model is empty");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (max_parallel_requests < 1) throw ConfigError("max_parallel_requests must be >= 1");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  detail::parse_url(config_.base_url);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

TokenTrace HttpBackend::score_after(std::string_view prefix, std::string_view continuation) {
  if (continuation.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw InputError("continuation is empty");
  }
  const std::string prompt = std::string(prefix) + std::string(continuation);
  const auto endpoint = detail::parse_url(config_.base_url);
  const json body = {{"model", config_.model},  {"prompt", prompt},
                     {"max_tokens", 1},         {"echo", true},
                     {"logprobs", config_.top_k}, {"temperature", 1.0}};
  const json response = detail::post_json(endpoint, endpoint.path_prefix + "/completions", body,
                                          api_key_, config_.timeout,
                                          {config_.max_attempts, config_.initial_backoff});
  const json& lp = logprobs_block(response);
  const auto& tokens = lp["tokens"];
  const auto& tops = lp["top_logprobs"];

  std::size_t begin = 0;
  std::size_t end = 0;
  if (config_.boundary == ScoringBoundary::kTextOffset) {
    if (!lp.contains("text_offset") || !lp["text_offset"].is_array()) {
      throw TransportError("completion logprobs lack text_offset; use token-count boundaries",
                           false);
    }
    const auto& offsets = lp["text_offset"];
    const std::size_t prefix_chars = utf8_length(prefix);
    const std::size_t prompt_chars = utf8_length(prompt);
    begin = tokens.size();
    end = tokens.size();
    for (std::size_t i = 0; i < offsets.size() && i < tokens.size(); ++i) {
      const auto off = offsets[i].get<std::size_t>();
      if (off >= prefix_chars && begin == tokens.size()) begin = i;
      if (off >= prompt_chars) {
        end = i;
        break;
      }
    }
  } else {
    begin = prefix.empty() ? 0 : count_tokens(prefix);
    end = count_tokens(prompt);
  }
  end = std::min<std::size_t>(end, tokens.size());
  if (begin >= end) throw InputError("continuation tokenizes to zero tokens");

  TokenTrace trace;
  for (std::size_t i = begin; i < end; ++i) {
    if (!tops[i].is_object()) {
      throw TransportError("no top-k alternatives at prompt position " + std::to_string(i) +
                               (i == 0 ? " (set an unconditional prefix such as a BOS token)"
                                       : ""),
                           false);
    }
    trace.push_scored(tokens[i].get<std::string>(), parse_top_logprobs(tops[i], config_.top_k));
  }
  return trace;
}

TokenTrace HttpBackend::score_conditional(std::string_view context,
                                          std::string_view continuation) {
  if (context.empty()) throw InputError("context is empty");
  return score_after(context, continuation);
}

TokenTrace HttpBackend::score_unconditional(std::string_view continuation) {
  return score_after(config_.unconditional_prefix, continuation);
}

Generation HttpBackend::generate(std::string_view context, std::size_t n_tokens,
                                 const SamplingConfig& cfg) {
  if (n_tokens == 0) throw InputError("n_tokens must be >= 1");
  cfg.validate();
  const auto endpoint = detail::parse_url(config_.base_url);
  json body = {{"model", config_.model},         {"prompt", std::string(context)},
               {"max_tokens", n_tokens},         {"temperature", cfg.temperature},
               {"top_p", cfg.top_p},             {"logprobs", config_.top_k}};
  if (cfg.seed) body["seed"] = *cfg.seed;
  const json response = detail::post_json(endpoint, endpoint.path_prefix + "/completions", body,
                                          api_key_, config_.timeout,
                                          {config_.max_attempts, config_.initial_backoff});
  const json& lp = logprobs_block(response);
  const auto& tokens = lp["tokens"];
  const auto& values = lp["token_logprobs"];
  const auto& tops = lp["top_logprobs"];

  Generation gen;
  gen.text = response["choices"][0].value("text", std::string{});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!values[i].is_number()) {
      throw TransportError("generated token " + std::to_string(i) + " has no logprob", false);
    }
    gen.trace.push_exact(tokens[i].get<std::string>(), std::min(0.0, values[i].get<double>()),
                         parse_top_logprobs(tops[i], config_.top_k));
  }
  if (gen.trace.empty()) throw GenerationError("endpoint returned zero tokens");
  gen.truncated = gen.trace.size() < n_tokens;
  return gen;
}

std::size_t HttpBackend::count_tokens(std::string_view text) {
  auto endpoint = detail::parse_url(config_.base_url);
  std::string root = endpoint.path_prefix;
  if (root.size() >= 3 && root.compare(root.size() - 3, 3, "/v1") == 0) {
    root.resize(root.size() - 3);
  }
  const json body = {{"model", config_.model}, {"prompt", std::string(text)}};
  const json response = detail::post_json(endpoint, root + "/tokenize", body, api_key_,
                                          config_.timeout,
                                          {config_.max_attempts, config_.initial_backoff});
  if (response.contains("count")) return response["count"].get<std::size_t>();
  if (response.contains("tokens") && response["tokens"].is_array()) {
    return response["tokens"].size();
  }
  throw TransportError("tokenize response has neither count nor tokens", false);
}

}  // namespace ugap
