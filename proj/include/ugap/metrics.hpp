#pragma once

#include <cstddef>
#include <span>

#include "ugap/backend.hpp"

namespace ugap {

inline constexpr double kDefaultTau = 2.0;     // nats
inline constexpr double kDefaultLambda = 1.0;

/// The four uncertainty measures of one continuation, all per token.
struct MetricSet {
  double nll = 0.0;   // mean surprisal, nats/token
  double ppl = 1.0;   // exp(nll)
  double pmi = 0.0;   // mean conditional minus unconditional logprob
  double cpmi = 0.0;  // nll plus thresholded unconditional logprobs
  std::size_t n_tokens = 0;

  bool operator==(const MetricSet&) const = default;
};

/// Mean negated logprob. Throws InputError on an empty trace.
double mean_token_nll(std::span<const double> logprobs);
double mean_token_nll(const TokenTrace& cond);

double perplexity(double nll);

/// Throws AlignmentError (carrying the first divergent index) when the traces
/// differ in length or token strings.
void check_alignment(const TokenTrace& cond, const TokenTrace& uncond);

double pmi(const TokenTrace& cond, const TokenTrace& uncond);

/// nll(cond) + (lambda / n) * sum of uncond logprobs at positions whose
/// conditional surprisal is >= tau.
double cpmi(const TokenTrace& cond, const TokenTrace& uncond, double tau = kDefaultTau,
            double lambda = kDefaultLambda);

MetricSet metric_set(const TokenTrace& cond, const TokenTrace& uncond,
                     double tau = kDefaultTau, double lambda = kDefaultLambda);

}  // namespace ugap
