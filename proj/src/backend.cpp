#include "ugap/backend.hpp"

#include <algorithm>
#include <cmath>

#include "ugap/errors.hpp"

namespace ugap {

double impute_logprob(const TopK& topk, std::string_view realized) {
  if (topk.empty()) throw InputError("endpoint returned no top-k alternatives");
  double lowest = topk.front().second;
  for (const auto& [token, logprob] : topk) {
    if (token == realized) return logprob;
    lowest = std::min(lowest, logprob);
  }
  return lowest - kImputationMargin;
}

void TokenTrace::push_scored(std::string token, TopK alternatives) {
  const bool present = std::any_of(alternatives.begin(), alternatives.end(),
                                   [&](const auto& alt) { return alt.first == token; });
  logprobs.push_back(impute_logprob(alternatives, token));
  imputed.push_back(!present);
  tokens.push_back(std::move(token));
  topk.push_back(std::move(alternatives));
}

void TokenTrace::push_exact(std::string token, double logprob, TopK alternatives) {
  tokens.push_back(std::move(token));
  logprobs.push_back(logprob);
  topk.push_back(std::move(alternatives));
  imputed.push_back(false);
}

void TokenTrace::validate() const {
  const std::size_t n = tokens.size();
  if (logprobs.size() != n || topk.size() != n || imputed.size() != n) {
    throw InputError("token trace arrays have mismatched lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(logprobs[i] <= 0.0)) {
      throw InputError("token trace logprob at index " + std::to_string(i) +
                       " is not <= 0");
    }
  }
}

void SamplingConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
}

TokenTrace CountingBackend::score_conditional(std::string_view context,
                                              std::string_view continuation) {
  ++conditional_;
  return inner_->score_conditional(context, continuation);
}

TokenTrace CountingBackend::score_unconditional(std::string_view continuation) {
  ++unconditional_;
  return inner_->score_unconditional(continuation);
}

Generation CountingBackend::generate(std::string_view context, std::size_t n_tokens,
                                     const SamplingConfig& cfg) {
  ++generate_;
  return inner_->generate(context, n_tokens, cfg);
}

std::size_t CountingBackend::count_tokens(std::string_view text) {
  return inner_->count_tokens(text);
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view story_id, std::size_t k) {
  std::uint64_t h = fnv1a64(story_id);
  h = fnv1a64(std::to_string(k), h);
  // splitmix64 finalizer over the combined value
  std::uint64_t z = h ^ (run_seed + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ugap
