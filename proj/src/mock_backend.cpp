#include "ugap/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ugap/corpus.hpp"
#include "ugap/errors.hpp"

namespace ugap {

MockBackend::MockBackend(std::vector<std::string> vocabulary, std::vector<double> probabilities,
                         MockOptions options)
    : vocab_(std::move(vocabulary)), probs_(std::move(probabilities)), options_(std::move(options)) {
  if (vocab_.empty()) throw ConfigError("mock vocabulary is empty");
  if (vocab_.size() != probs_.size()) {
    throw ConfigError("mock vocabulary and probabilities differ in length");
  }
  for (double p : probs_) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("mock probabilities must lie in (0, 1]");
  }
  const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("mock probabilities sum to " + std::to_string(total) + ", not 1");
  }
  for (std::size_t v = 0; v < vocab_.size(); ++v) {
    if (!index_.emplace(vocab_[v], v).second) {
      throw ConfigError("mock vocabulary has duplicate tokens");
    }
  }
  if (options_.top_k == 0) throw ConfigError("top_k must be >= 1");
  if (!(options_.context_weight >= 0.0 && options_.context_weight < 1.0)) {
    throw ConfigError("context_weight must lie in [0, 1)");
  }
  unigram_top_ = top_alternatives(probs_);
}

MockBackend MockBackend::fixture(MockOptions options) {
  return MockBackend({"a", "b", "c", "d"}, {0.4, 0.3, 0.2, 0.1}, std::move(options));
}

std::vector<double> MockBackend::distribution(const std::map<std::string, std::size_t>& counts,
                                              std::size_t history) const {
  if (options_.context_weight == 0.0 || history == 0) return probs_;
  const double w = options_.context_weight;
  std::vector<double> dist(vocab_.size());
  for (std::size_t v = 0; v < vocab_.size(); ++v) {
    auto it = counts.find(vocab_[v]);
    const double freq = it == counts.end() ? 0.0 : static_cast<double>(it->second) / history;
    dist[v] = (1.0 - w) * probs_[v] + w * freq;
  }
  return dist;
}

TopK MockBackend::top_alternatives(const std::vector<double>& dist) const {
  if (!unigram_top_.empty() && dist == probs_) return unigram_top_;
  std::vector<std::size_t> order(vocab_.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(options_.top_k, order.size());
  // Ties keep vocabulary order.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return dist[a] != dist[b] ? dist[a] > dist[b] : a < b;
                    });
  TopK top;
  top.reserve(k);
  for (std::size_t i = 0; i < k; ++i) top.emplace_back(vocab_[order[i]], std::log(dist[order[i]]));
  return top;
}

TokenTrace MockBackend::score(const std::vector<std::string>& history,
                              const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw InputError("continuation tokenizes to zero tokens");
  std::map<std::string, std::size_t> counts;
  std::size_t in_vocab = 0;
  auto observe = [&](const std::string& token) {
    if (!in_vocabulary(token)) return;
    ++counts[token];
    ++in_vocab;
  };
  for (const auto& token : history) observe(token);

  TokenTrace trace;
  for (const auto& token : tokens) {
    const std::vector<double> dist = distribution(counts, in_vocab);
    TopK top = top_alternatives(dist);
    // Like echo endpoints, the realized token is always listed when the model knows it.
    if (auto it = index_.find(token); it != index_.end()) {
      const bool listed = std::any_of(top.begin(), top.end(),
                                      [&](const auto& alt) { return alt.first == token; });
      if (!listed) top.emplace_back(token, std::log(dist[it->second]));
    }
    trace.push_scored(token, std::move(top));
    observe(token);
  }
  return trace;
}

TokenTrace MockBackend::score_conditional(std::string_view context,
                                          std::string_view continuation) {
  return score(split_whitespace(context), split_whitespace(continuation));
}

TokenTrace MockBackend::score_unconditional(std::string_view continuation) {
  return score({}, split_whitespace(continuation));
}

Generation MockBackend::generate(std::string_view context, std::size_t n_tokens,
                                 const SamplingConfig& cfg) {
  if (n_tokens == 0) throw InputError("n_tokens must be >= 1");
  cfg.validate();
  std::mt19937_64 rng(cfg.seed ? *cfg.seed : std::random_device{}());

  std::map<std::string, std::size_t> counts;
  std::size_t in_vocab = 0;
  for (const auto& token : split_whitespace(context)) {
    if (!in_vocabulary(token)) continue;
    ++counts[token];
    ++in_vocab;
  }

  const std::size_t produce =
      options_.stop_after > 0 ? std::min(n_tokens, options_.stop_after) : n_tokens;
  Generation gen;
  gen.truncated = produce < n_tokens;
  for (std::size_t step = 0; step < produce; ++step) {
    const std::vector<double> dist = distribution(counts, in_vocab);

    // Sampling distribution: temperature, then nucleus truncation.
    std::vector<double> sampling(dist.size());
    for (std::size_t v = 0; v < dist.size(); ++v) {
      sampling[v] = std::pow(dist[v], 1.0 / cfg.temperature);
    }
    if (cfg.top_p < 1.0) {
      std::vector<std::size_t> order(dist.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sampling[a] > sampling[b]; });
      const double total = std::accumulate(sampling.begin(), sampling.end(), 0.0);
      double cumulative = 0.0;
      for (std::size_t idx : order) {
        if (cumulative >= cfg.top_p * total) {
          sampling[idx] = 0.0;
        } else {
          cumulative += sampling[idx];
        }
      }
    }
    const double total = std::accumulate(sampling.begin(), sampling.end(), 0.0);
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
    std::size_t chosen = dist.size();
    double cumulative = 0.0;
    for (std::size_t v = 0; v < dist.size(); ++v) {
      if (sampling[v] <= 0.0) continue;
      chosen = v;
      cumulative += sampling[v];
      if (u < cumulative) break;
    }

    const std::string& token = vocab_[chosen];
    gen.trace.push_exact(token, std::log(dist[chosen]), top_alternatives(dist));
    if (!gen.text.empty()) gen.text += ' ';
    gen.text += token;
    ++counts[token];
    ++in_vocab;
  }
  return gen;
}

std::size_t MockBackend::count_tokens(std::string_view text) {
  return split_whitespace(text).size();
}

}  // namespace ugap
