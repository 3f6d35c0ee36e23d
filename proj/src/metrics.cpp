#include "ugap/metrics.hpp"

#include <cmath>
#include <numeric>

#include "ugap/errors.hpp"

namespace ugap {

double mean_token_nll(std::span<const double> logprobs) {
  if (logprobs.empty()) throw InputError("cannot average an empty trace");
  double sum = 0.0;
  for (double lp : logprobs) sum -= lp;
  return sum / static_cast<double>(logprobs.size());
}

double mean_token_nll(const TokenTrace& cond) { return mean_token_nll(cond.logprobs); }

double perplexity(double nll) { return std::exp(nll); }

void check_alignment(const TokenTrace& cond, const TokenTrace& uncond) {
  const std::size_t common = std::min(cond.size(), uncond.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (cond.tokens[i] != uncond.tokens[i]) {
      throw AlignmentError("traces diverge at token " + std::to_string(i) + ": '" +
                               cond.tokens[i] + "' vs '" + uncond.tokens[i] + "'",
                           i);
    }
  }
  if (cond.size() != uncond.size()) {
    throw AlignmentError("trace lengths differ (" + std::to_string(cond.size()) + " vs " +
                             std::to_string(uncond.size()) + "); first divergent index " +
                             std::to_string(common),
                         common);
  }
  if (cond.empty()) throw InputError("cannot score an empty trace");
}

double pmi(const TokenTrace& cond, const TokenTrace& uncond) {
  check_alignment(cond, uncond);
  double sum = 0.0;
  for (std::size_t i = 0; i < cond.size(); ++i) sum += cond.logprobs[i] - uncond.logprobs[i];
  return sum / static_cast<double>(cond.size());
}

double cpmi(const TokenTrace& cond, const TokenTrace& uncond, double tau, double lambda) {
  check_alignment(cond, uncond);
  if (!std::isfinite(tau) && !(tau > 0)) throw InputError("tau must be finite or +inf");
  double correction = 0.0;
  for (std::size_t i = 0; i < cond.size(); ++i) {
    if (-cond.logprobs[i] >= tau) correction += uncond.logprobs[i];
  }
  return mean_token_nll(cond) + lambda * correction / static_cast<double>(cond.size());
}

MetricSet metric_set(const TokenTrace& cond, const TokenTrace& uncond, double tau,
                     double lambda) {
  MetricSet m;
  m.nll = mean_token_nll(cond);
  m.ppl = perplexity(m.nll);
  m.pmi = pmi(cond, uncond);
  m.cpmi = cpmi(cond, uncond, tau, lambda);
  m.n_tokens = cond.size();
  return m;
}

}  // namespace ugap
