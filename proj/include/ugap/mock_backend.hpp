#pragma once

#include <map>
#include <unordered_map>
#include <string>
#include <vector>

#include "ugap/backend.hpp"

namespace ugap {

struct MockOptions {
  std::string model_id = "mock";
  std::size_t top_k = 20;
  /// Generation stops after this many tokens (0 = never stops early).
  std::size_t stop_after = 0;
  /// Weight of the in-context cache component; 0 gives a context-independent model.
  double context_weight = 0.0;
};

/// Categorical model over a fixed vocabulary with whitespace tokenization.
///
/// With context_weight = 0 every position is scored under the same unigram
/// distribution regardless of context. With context_weight = w > 0 a token's
/// probability is (1 - w) * unigram + w * (relative frequency of the token in
/// the preceding text), which makes context informative.
///
/// Scoring lists the top-K alternatives plus the realized token whenever it is
/// in the vocabulary, so only out-of-vocabulary tokens are imputed.
class MockBackend : public Backend {
 public:
  MockBackend(std::vector<std::string> vocabulary, std::vector<double> probabilities,
              MockOptions options = {});

  /// Vocabulary {a, b, c, d} with probabilities {0.4, 0.3, 0.2, 0.1}.
  static MockBackend fixture(MockOptions options = {});

  TokenTrace score_conditional(std::string_view context, std::string_view continuation) override;
  TokenTrace score_unconditional(std::string_view continuation) override;
  Generation generate(std::string_view context, std::size_t n_tokens,
                      const SamplingConfig& cfg) override;
  std::size_t count_tokens(std::string_view text) override;
  std::string model_id() const override { return options_.model_id; }

  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  // Distribution over the vocabulary after `history` tokens.
  std::vector<double> distribution(const std::map<std::string, std::size_t>& counts,
                                   std::size_t history) const;
  TopK top_alternatives(const std::vector<double>& dist) const;
  TokenTrace score(const std::vector<std::string>& history,
                   const std::vector<std::string>& tokens) const;

  bool in_vocabulary(const std::string& token) const { return index_.count(token) > 0; }

  std::vector<std::string> vocab_;
  std::vector<double> probs_;
  MockOptions options_;
  std::unordered_map<std::string, std::size_t> index_;
  TopK unigram_top_;  // top-K of the context-free distribution
};

}  // namespace ugap
