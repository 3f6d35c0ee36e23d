#pragma once

#include <chrono>
#include <string>

#include "ugap/backend.hpp"

namespace ugap {

/// How the continuation's positions are located inside an echoed prompt.
enum class ScoringBoundary {
  /// Use the per-token `text_offset` array of the completion response.
  kTextOffset,
  /// Count context tokens through the server's `/tokenize` route instead,
  /// for servers that do not report text offsets.
  kTokenCount,
};

struct BackendConfig {
  /// OpenAI-style API root, e.g. http://localhost:8000/v1
  std::string base_url;
  std::string model;
  /// Name of the environment variable holding the API key; empty for none.
  std::string api_key_env;
  std::size_t top_k = 20;
  std::size_t max_parallel_requests = 8;
  std::chrono::milliseconds timeout{120000};
  ScoringBoundary boundary = ScoringBoundary::kTextOffset;
  /// Prepended to unconditional prompts for models whose server does not
  /// score the first prompt token (no BOS), e.g. "<|endoftext|>".
  std::string unconditional_prefix;
  std::size_t max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};

  void validate() const;
};

/// Client for a completions endpoint that returns per-token logprobs with
/// top-K alternatives (`echo` + `logprobs`), such as a vLLM OpenAI server.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  TokenTrace score_conditional(std::string_view context, std::string_view continuation) override;
  TokenTrace score_unconditional(std::string_view continuation) override;
  Generation generate(std::string_view context, std::size_t n_tokens,
                      const SamplingConfig& cfg) override;
  std::size_t count_tokens(std::string_view text) override;
  std::string model_id() const override { return config_.model; }

  const BackendConfig& config() const { return config_; }

 private:
  TokenTrace score_after(std::string_view prefix, std::string_view continuation);

  BackendConfig config_;
  std::string api_key_;
};

}  // namespace ugap
