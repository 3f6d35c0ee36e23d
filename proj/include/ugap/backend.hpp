#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ugap {

using TopK = std::vector<std::pair<std::string, double>>;

/// Per-token log-probabilities (natural log) for one scored or generated text.
struct TokenTrace {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  std::vector<TopK> topk;
  std::vector<bool> imputed;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  /// Appends one position, imputing the logprob when `token` is absent from `alternatives`.
  void push_scored(std::string token, TopK alternatives);
  /// Appends one position with a logprob reported directly by the endpoint.
  void push_exact(std::string token, double logprob, TopK alternatives);

  /// Throws InputError when the parallel arrays disagree or a logprob is positive.
  void validate() const;
};

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  /// Caps the length-matched generation; a capped pair is flagged as a length mismatch.
  std::size_t max_tokens = 1024;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct Generation {
  TokenTrace trace;
  std::string text;
  bool truncated = false;  // endpoint stopped before the requested length
};

/// A model that can score text and sample continuations. Implementations must
/// be safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Teacher-forced pass over context + continuation; returns the continuation's positions.
  virtual TokenTrace score_conditional(std::string_view context,
                                       std::string_view continuation) = 0;
  /// Same as score_conditional with no context.
  virtual TokenTrace score_unconditional(std::string_view continuation) = 0;
  /// Samples up to `n_tokens` tokens after `context`.
  virtual Generation generate(std::string_view context, std::size_t n_tokens,
                              const SamplingConfig& cfg) = 0;
  virtual std::size_t count_tokens(std::string_view text) = 0;
  virtual std::string model_id() const = 0;
};

/// Logprob of `realized` from a top-K list, or min(listed) - 2.0 nats when absent.
double impute_logprob(const TopK& topk, std::string_view realized);

inline constexpr double kImputationMargin = 2.0;

/// Counts calls per pass; forwards everything to the wrapped backend.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  TokenTrace score_conditional(std::string_view context, std::string_view continuation) override;
  TokenTrace score_unconditional(std::string_view continuation) override;
  Generation generate(std::string_view context, std::size_t n_tokens,
                      const SamplingConfig& cfg) override;
  std::size_t count_tokens(std::string_view text) override;
  std::string model_id() const override { return inner_->model_id(); }

  std::size_t conditional_calls() const { return conditional_.load(); }
  std::size_t unconditional_calls() const { return unconditional_.load(); }
  std::size_t generate_calls() const { return generate_.load(); }
  /// Scoring and generation calls; token counting is not an inference pass.
  std::size_t inference_calls() const {
    return conditional_calls() + unconditional_calls() + generate_calls();
  }

 private:
  std::shared_ptr<Backend> inner_;
  std::atomic<std::size_t> conditional_{0};
  std::atomic<std::size_t> unconditional_{0};
  std::atomic<std::size_t> generate_{0};
};

/// Stable 64-bit FNV-1a hash.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Per-request seed derived from a run seed and a pair key, independent of
/// scheduling order.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view story_id, std::size_t k);

}  // namespace ugap
