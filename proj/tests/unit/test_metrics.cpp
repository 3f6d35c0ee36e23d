#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ugap/errors.hpp"
#include "ugap/metrics.hpp"
#include "ugap/mock_backend.hpp"

using namespace ugap;

namespace {

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Unconditional trace sharing the conditional's tokens.
TokenTrace aligned_uncond(std::mt19937_64& rng, const TokenTrace& cond) {
  std::uniform_real_distribution<double> u(-10.0, 0.0);
  TokenTrace t;
  for (const auto& tok : cond.tokens) t.push_exact(tok, u(rng), {});
  return t;
}

}  // namespace

TEST_CASE("mock fixture values") {
  auto mock = MockBackend::fixture();
  const auto ab = mock.score_conditional("c", "a b");
  CHECK(std::round(mean_token_nll(ab) * 1e4) / 1e4 == 1.0601);
  CHECK(mean_token_nll(ab) == doctest::Approx(-(std::log(0.4) + std::log(0.3)) / 2));

  const auto d_cond = mock.score_conditional("a", "d");
  const auto d_uncond = mock.score_unconditional("d");
  CHECK(cpmi(d_cond, d_uncond) == 0.0);
  CHECK(pmi(d_cond, d_uncond) == 0.0);
}

TEST_CASE("metric kernels match the straight-loop oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  for (int i = 0; i < 1000; ++i) {
    const auto cond = oracle::random_trace(rng, len(rng));
    const auto uncond = aligned_uncond(rng, cond);
    const auto m = metric_set(cond, uncond);
    CHECK(close(m.nll, oracle::nll(cond.logprobs)));
    CHECK(close(m.ppl, oracle::ppl(cond.logprobs)));
    CHECK(close(m.pmi, oracle::pmi(cond.logprobs, uncond.logprobs)));
    CHECK(close(m.cpmi, oracle::cpmi(cond.logprobs, uncond.logprobs, 2.0, 1.0)));
    CHECK(m.n_tokens == cond.size());
  }
}

TEST_CASE("property: metric identities") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  for (int i = 0; i < 1000; ++i) {
    const auto cond = oracle::random_trace(rng, len(rng));
    const auto uncond = aligned_uncond(rng, cond);
    const double nll = mean_token_nll(cond);
    CHECK(close(perplexity(nll), std::exp(nll)));
    CHECK(close(pmi(cond, uncond), mean_token_nll(uncond) - nll));
    // With tau = 0 every position is penalized: CPMI = -PMI.
    CHECK(close(cpmi(cond, uncond, 0.0, 1.0), -pmi(cond, uncond)));
    // lambda = 0 reduces CPMI to NLL.
    CHECK(cpmi(cond, uncond, 2.0, 0.0) == nll);
    // Identical traces carry no pointwise information.
    CHECK(pmi(cond, cond) == 0.0);
  }
}

TEST_CASE("cpmi threshold is inclusive") {
  TokenTrace cond, uncond;
  cond.push_exact("x", -2.0, {});
  cond.push_exact("y", -1.0, {});
  uncond.push_exact("x", -3.0, {});
  uncond.push_exact("y", -5.0, {});
  // Only x reaches surprisal 2: 1.5 + (1/2)(-3) = 0
  CHECK(cpmi(cond, uncond, 2.0, 1.0) == 0.0);
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(mean_token_nll(TokenTrace{}), InputError);
  TokenTrace a, b;
  a.push_exact("x", -1.0, {});
  a.push_exact("y", -1.0, {});
  b.push_exact("x", -1.0, {});
  CHECK_THROWS_AS(check_alignment(a, b), AlignmentError);
  b.push_exact("z", -1.0, {});
  try {
    check_alignment(a, b);
    FAIL("expected alignment error");
  } catch (const AlignmentError& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(pmi(a, b), AlignmentError);
}
