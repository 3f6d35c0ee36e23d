#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ugap/errors.hpp"
#include "ugap/gap.hpp"
#include "ugap/mock_backend.hpp"

using namespace ugap;

namespace {

PairedRecord record(const std::string& model, const std::string& domain, double h_nll,
                    double m_nll, double h_pmi, double m_pmi, const std::string& story = "s",
                    std::size_t k = 2) {
  PairedRecord r;
  r.story_id = story;
  r.k = k;
  r.model_id = model;
  r.dataset = "d";
  r.domain = domain;
  r.human = {h_nll, std::exp(h_nll), h_pmi, h_nll, 5};
  r.model = {m_nll, std::exp(m_nll), m_pmi, m_nll, 5};
  return r;
}

GapSummary summary_with(double nll_ratio, double pmi_diff) {
  GapSummary s;
  s.median.nll_ratio = nll_ratio;
  s.median.ppl_ratio = nll_ratio;
  s.median.pmi_diff = pmi_diff;
  s.median.cpmi_diff = pmi_diff;
  return s;
}

SegmentPair pair_of(const std::string& context, const std::string& continuation) {
  SegmentPair p;
  p.story_id = "s";
  p.k = 2;
  p.context = context;
  p.separator = " ";
  p.continuation = continuation;
  p.dataset = "d";
  p.domain = "creative";
  return p;
}

}  // namespace

TEST_CASE("gap values are ratios for NLL/PPL and differences for PMI/CPMI") {
  const auto r = record("m", "creative", 3.0, 1.5, -1.0, 1.0);
  const auto v = gap_values(r);
  CHECK(v.nll_ratio == 2.0);
  CHECK(v.ppl_ratio == doctest::Approx(std::exp(1.5)));
  CHECK(v.pmi_diff == -2.0);
  CHECK(v.cpmi_diff == 1.5);

  auto degenerate = r;
  degenerate.model.nll = 0.0;
  CHECK_THROWS_AS(gap_values(degenerate), DegenerateError);
}

TEST_CASE("median uses the mean of the middle pair for even counts") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS_AS(median({}), InputError);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int n = 1; n < 40; ++n) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    CHECK(median(v) == oracle::sorted_median(v));
  }
}

TEST_CASE("aggregate_median groups, excludes degenerate records and counts mismatches") {
  std::vector<PairedRecord> recs = {
      record("m1", "creative", 2.0, 1.0, -1.0, 0.0, "a"),
      record("m1", "creative", 4.0, 1.0, -3.0, 0.0, "b"),
      record("m1", "creative", 4.0, 0.0, -3.0, 0.0, "c"),
      record("m2", "news", 3.0, 1.0, -2.0, 0.0, "a"),
  };
  recs[1].length_mismatch = true;
  const auto by_model = aggregate_median(recs, GroupBy{true, false, false});
  REQUIRE(by_model.size() == 2);
  CHECK(by_model[0].key.model_id == "m1");
  CHECK(by_model[0].key.dataset == "*");
  CHECK(by_model[0].median.nll_ratio == 3.0);
  CHECK(by_model[0].median.pmi_diff == -2.0);
  CHECK(by_model[0].count == 2);
  CHECK(by_model[0].excluded == 1);
  CHECK(by_model[0].mismatched == 1);
  CHECK(by_model[0].mismatch_rate() == doctest::Approx(1.0 / 3.0));

  const auto pooled = aggregate_median(recs, GroupBy{false, false, false});
  REQUIRE(pooled.size() == 1);
  CHECK(pooled[0].median.nll_ratio == 3.0);
  CHECK(pooled[0].count == 3);
}

TEST_CASE("median of medians differs from the pooled median") {
  std::vector<PairedRecord> recs;
  // Model A contributes many records near ratio 1, models B and C a few near 3.
  for (int i = 0; i < 9; ++i) recs.push_back(record("A", "x", 1.0, 1.0, 0, 0, "a" + std::to_string(i)));
  recs.push_back(record("B", "x", 3.0, 1.0, 0, 0, "b"));
  recs.push_back(record("C", "x", 3.0, 1.0, 0, 0, "c"));
  const auto pooled = aggregate_median(recs, GroupBy{false, false, true});
  const auto mom = aggregate_median_of_medians(recs, GroupBy{false, false, true});
  REQUIRE(pooled.size() == 1);
  REQUIRE(mom.size() == 1);
  CHECK(pooled[0].median.nll_ratio == 1.0);
  CHECK(mom[0].median.nll_ratio == 3.0);
  CHECK(mom[0].key.model_id == "*");
  CHECK(mom[0].count == 11);
}

TEST_CASE("relative PMI increase reproduces the published average") {
  // Creative -2.15 vs essays -1.71 from the pooled domain table.
  CHECK(relative_pmi_increase(summary_with(3.11, -2.15), summary_with(3.07, -1.71)) ==
        doctest::Approx(100.0 * (2.15 - 1.71) / 1.71));
  // The "vs. Essays" average row is the mean of the eight per-model percents.
  const std::vector<double> vs_essays = {28.3, 23.4, 21.4, 35.3, 8.7, 12.3, 31.5, 40.9};
  double total = 0;
  for (double p : vs_essays) total += p;
  CHECK(std::round(total / vs_essays.size() * 10) / 10 == 25.2);

  CHECK_THROWS_AS(relative_pmi_increase(summary_with(1, -1), summary_with(1, 0.0)),
                  DegenerateError);
  CHECK_THROWS_AS(relative_pmi_increase(summary_with(1, 0.5), summary_with(1, -1)), InputError);
}

TEST_CASE("bucketize assigns report-relative quintiles") {
  std::vector<GapSummary> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(summary_with(1.0 + i, -0.1 * i));
  bucketize(ten);
  for (int i = 0; i < 10; ++i) {
    CHECK(ten[i].buckets[0] == 1 + i / 2);
    // PMI magnitude is the negated difference: more negative = larger.
    CHECK(ten[i].buckets[2] == 1 + i / 2);
  }
  std::vector<GapSummary> three = {summary_with(3, -1), summary_with(1, -3), summary_with(2, -2)};
  bucketize(three);
  CHECK(three[0].buckets[0] == 3);
  CHECK(three[1].buckets[0] == 1);
  CHECK(three[1].buckets[2] == 3);
  std::vector<GapSummary> tied = {summary_with(2, -1), summary_with(2, -1)};
  bucketize(tied);
  CHECK(tied[0].buckets[0] == tied[1].buckets[0]);
}

TEST_CASE("evaluate_pair makes four calls and length-matches the generation") {
  auto inner = std::make_shared<MockBackend>(MockBackend::fixture());
  CountingBackend backend(inner);
  EvaluationSettings settings;
  settings.seed = 0;
  const auto ev = evaluate_pair_traced(pair_of("a b", "c d a"), backend, settings);
  CHECK(backend.inference_calls() == 4);
  CHECK(backend.generate_calls() == 1);
  CHECK(ev.record.human.n_tokens == 3);
  CHECK(ev.record.model.n_tokens == 3);
  CHECK_FALSE(ev.record.length_mismatch);
  CHECK(ev.record.model_id == "mock");
  // Context-independent mock: conditional equals unconditional for both texts.
  CHECK(ev.record.human.pmi == 0.0);
  CHECK(ev.record.model.pmi == 0.0);
  CHECK(ev.record.human.nll == doctest::Approx(oracle::nll(ev.human_conditional.logprobs)));

  // Same key, same seed: identical generations.
  const auto again = evaluate_pair_traced(pair_of("a b", "c d a"), *inner, settings);
  CHECK(again.generation.text == ev.generation.text);
}

TEST_CASE("generation cap and early stops are flagged") {
  auto backend = MockBackend::fixture();
  EvaluationSettings settings;
  settings.seed = 1;
  settings.sampling.max_tokens = 2;
  const auto capped = evaluate_pair(pair_of("a", "a b c d"), backend, settings);
  CHECK(capped.model.n_tokens == 2);
  CHECK(capped.length_mismatch);
  CHECK_FALSE(capped.truncated);

  MockOptions stop;
  stop.stop_after = 1;
  auto stopping = MockBackend::fixture(stop);
  const auto early = evaluate_pair(pair_of("a", "a b c"), stopping, EvaluationSettings{});
  CHECK(early.truncated);
  CHECK(early.length_mismatch);
}

TEST_CASE("pair failures carry the pair identity") {
  auto backend = MockBackend::fixture();
  try {
    evaluate_pair(pair_of("", "a"), backend, EvaluationSettings{});
    FAIL("expected a pair error");
  } catch (const PairError& e) {
    CHECK(e.story_id() == "s");
    CHECK(e.k() == 2);
    CHECK_FALSE(e.retryable());
  }
}

TEST_CASE("scored continuation keeps the original separator") {
  auto p = pair_of("Ctx.", "Next.");
  CHECK(scored_continuation(p) == " Next.");
  p.separator = "\n\n";
  CHECK(scored_continuation(p) == "\n\nNext.");
  p.separator.clear();
  CHECK(scored_continuation(p) == " Next.");
}
