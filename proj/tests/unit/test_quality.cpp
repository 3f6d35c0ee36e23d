#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ugap/errors.hpp"
#include "ugap/quality.hpp"

using namespace ugap;

namespace {

std::vector<double> noiseless(const std::vector<double>& xs, double b0, double b1, double b2) {
  std::vector<double> ys;
  for (double x : xs) ys.push_back(b0 + b1 * x + b2 * x * x);
  return ys;
}

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += i ? " word" : "word";
  return s;
}

PairedRecord rec(const std::string& model, const std::string& story, double h_nll, double m_nll) {
  PairedRecord r;
  r.story_id = story;
  r.k = 2;
  r.model_id = model;
  r.dataset = "d";
  r.human.nll = h_nll;
  r.model.nll = m_nll;
  return r;
}

}  // namespace

TEST_CASE("average ranks split ties") {
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) ==
        std::vector<double>{2.0, 3.5, 3.5, 1.0});
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> small(0, 5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> xs(30);
    for (auto& x : xs) x = small(rng);
    CHECK(average_ranks(xs) == oracle::brute_ranks(xs));
  }
}

TEST_CASE("spearman equals rank pearson with ties") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> len(3, 50);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int t = 0; t < 500; ++t) {
    const int n = len(rng);
    std::vector<double> xs(n), ys(n);
    for (auto& x : xs) x = coarse(rng);
    for (auto& y : ys) y = coarse(rng);
    const double expected = oracle::brute_spearman(xs, ys);
    if (std::isnan(expected)) {
      CHECK_THROWS_AS(spearman(xs, ys), UndefinedCorrelationError);
      continue;
    }
    CHECK(std::abs(spearman(xs, ys).rho - expected) <= 1e-12);
  }
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 4, 6, 9}).rho == 1.0);
  CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 4, 6, 9}).p == 0.0);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), InputError);
}

TEST_CASE("quadratic fit recovers a noiseless parabola in raw and standardized units") {
  std::vector<double> xs;
  for (int i = 0; i < 40; ++i) xs.push_back(-2.0 + 0.13 * i);
  const auto reg = fit_quadratic(xs, noiseless(xs, 1.5, -0.7, 0.25));
  CHECK(std::abs(reg.raw_coefficients[0] - 1.5) <= 1e-8);
  CHECK(std::abs(reg.raw_coefficients[1] + 0.7) <= 1e-8);
  CHECK(std::abs(reg.raw_coefficients[2] - 0.25) <= 1e-8);
  CHECK(reg.r2_quad == doctest::Approx(1.0));
  REQUIRE(reg.raw_peak);
  CHECK(*reg.raw_peak == doctest::Approx(0.7 / 0.5));
  CHECK(reg.delta_r2 >= 0.0);
}

TEST_CASE("quadratic fit errors") {
  CHECK_THROWS_AS(fit_quadratic(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}),
                  InputError);
  CHECK_THROWS_AS(fit_quadratic(std::vector<double>{1, 1, 1, 1}, std::vector<double>{1, 2, 3, 4}),
                  RankDeficiencyError);
  CHECK_THROWS_AS(fit_quadratic(std::vector<double>{1, 2, 1, 2}, std::vector<double>{1, 2, 3, 4}),
                  RankDeficiencyError);
}

TEST_CASE("property: quadratic R^2 never falls below linear R^2") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> xs(25), ys(25);
    for (auto& x : xs) x = n01(rng);
    for (auto& y : ys) y = n01(rng);
    const auto reg = fit_quadratic(xs, ys);
    CHECK(reg.r2_quad >= reg.r2_lin);
    CHECK(reg.delta_r2 == doctest::Approx(reg.r2_quad - reg.r2_lin));
  }
}

TEST_CASE("shape classification rules") {
  RegressionResult r;
  r.p2 = 0.01;
  r.beta2 = -0.1;
  r.z_star = 1.0;
  CHECK(classify_shape(r) == ShapeClass::kSweetSpot);
  r.z_star = 3.0;
  CHECK(classify_shape(r) == ShapeClass::kDiminishing);
  r.z_star = 2.5;
  CHECK(classify_shape(r) == ShapeClass::kSweetSpot);
  r.beta2 = 0.1;
  r.z_star = -1.0;
  CHECK(classify_shape(r) == ShapeClass::kUShape);
  r.p2 = 0.5;
  r.p1 = 0.01;
  CHECK(classify_shape(r) == ShapeClass::kLinear);
  r.p1 = 0.5;
  CHECK(classify_shape(r) == ShapeClass::kFlatNS);
  // Significant upward curvature with its trough out of range fits no class.
  r.p2 = 0.01;
  r.z_star = 4.0;
  CHECK(classify_shape(r) == ShapeClass::kFlatNS);
}

TEST_CASE("one-sided significance") {
  CHECK(significant_in_direction({0.2, 0.08, 50}, +1));
  CHECK_FALSE(significant_in_direction({0.2, 0.08, 50}, -1));
  CHECK_FALSE(significant_in_direction({0.2, 0.12, 50}, +1));
  CHECK(significant_in_direction({-0.2, 0.01, 50}, -1));
}

TEST_CASE("quality word window") {
  MockQualityScorer scorer;
  const auto short_one = score_quality("s", 2, Role::kHuman, words(100), words(49), scorer);
  CHECK(short_one.excluded);
  CHECK(short_one.word_count == 149);
  const auto ok = score_quality("s", 2, Role::kHuman, words(100), words(50), scorer);
  CHECK_FALSE(ok.excluded);
  CHECK(ok.score == doctest::Approx(std::tanh(4.0)));
  CHECK(score_quality("s", 2, Role::kModel, words(300), words(100), scorer).word_count == 400);
  CHECK(score_quality("s", 2, Role::kModel, words(300), words(101), scorer).excluded);
  CHECK(quality_passage("A.", "B.") == "A. B.");
  CHECK(quality_passage("A.", "\n\nB.") == "A.\n\nB.");
}

TEST_CASE("scorer failures become pair errors") {
  struct Failing : QualityScorer {
    double score(std::string_view) override { throw TransportError("down", true); }
  } failing;
  try {
    score_quality("s9", 4, Role::kHuman, words(100), words(100), failing);
    FAIL("expected a pair error");
  } catch (const PairError& e) {
    CHECK(e.story_id() == "s9");
    CHECK(e.retryable());
  }
}

TEST_CASE("join fans human scores out to every model and keeps model scores per model") {
  const std::vector<PairedRecord> records = {rec("m1", "a", 3.0, 1.0), rec("m2", "a", 3.5, 2.0)};
  QualityScore human{"a", 2, Role::kHuman, 0.5, 200, false, ""};
  QualityScore model1{"a", 2, Role::kModel, 0.25, 200, false, "m1"};
  QualityScore orphan{"zz", 2, Role::kHuman, 0.1, 200, false, ""};
  QualityScore excluded{"a", 2, Role::kHuman, 0.0, 20, true, ""};
  const auto joined = join_observations(records, {human, model1, orphan, excluded});
  REQUIRE(joined.observations.size() == 3);
  CHECK(joined.observations[0].model_id == "m1");
  CHECK(joined.observations[0].metrics.nll == 3.0);
  CHECK(joined.observations[1].model_id == "m2");
  CHECK(joined.observations[1].metrics.nll == 3.5);
  CHECK(joined.observations[2].role == Role::kModel);
  CHECK(joined.observations[2].metrics.nll == 1.0);
  CHECK(joined.unmatched_scores == 1);
  CHECK(joined.excluded_scores == 1);
}

TEST_CASE("correlate summarizes groups, skips undersized ones and counts shapes") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  std::vector<Observation> obs;
  for (const std::string model : {"m1", "m2", "m3"}) {
    for (int i = 0; i < 200; ++i) {
      Observation o;
      o.model_id = model;
      o.dataset = "d";
      o.metrics.nll = n01(rng);
      o.metrics.ppl = std::exp(o.metrics.nll);
      o.metrics.pmi = -o.metrics.nll;
      o.quality = 0.5 * o.metrics.nll + 0.1 * n01(rng);
      obs.push_back(o);
    }
  }
  Observation lonely;
  lonely.model_id = "tiny";
  lonely.dataset = "d";
  obs.push_back(lonely);

  const auto summary = correlate(obs);
  CHECK(summary.rows.size() == 12);
  REQUIRE(summary.rollup.size() == 3);
  const auto& nll = summary.rollup[0];
  CHECK(nll.metric == UncertaintyMetric::kNll);
  CHECK(nll.groups == 3);
  CHECK(nll.mean_rho > 0.9);
  CHECK(nll.pct_significant_expected == 100.0);
  // PMI is the mirror image and significant in its expected (negative) direction.
  CHECK(summary.rollup[2].mean_rho < -0.9);
  CHECK(summary.rollup[2].pct_significant_expected == 100.0);
  CHECK(summary.rollup[2].pct_significant_positive == 0.0);
  CHECK(summary.diagnostics.size() == 3);
  for (const auto& counts : summary.shapes) CHECK(counts.total() == 4);
  // Ranks are invariant to exp: NLL and PPL give the same rho.
  CHECK(summary.rollup[1].mean_rho == doctest::Approx(nll.mean_rho));
}

TEST_CASE("planted sweet spot is classified") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01;
  int hits = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> xs(500), ys(500);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = n01(rng);
      ys[i] = 0.1 * xs[i] - 0.05 * xs[i] * xs[i] + 0.1 * n01(rng);
    }
    hits += classify_shape(fit_quadratic(xs, ys)) == ShapeClass::kSweetSpot;
  }
  CHECK(hits >= 48);
}
