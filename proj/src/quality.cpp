#include "ugap/quality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <tuple>

#include "http_client.hpp"
#include "ugap/corpus.hpp"
#include "ugap/errors.hpp"
#include "ugap/stats.hpp"

namespace ugap {

const char* role_name(Role role) { return role == Role::kHuman ? "human" : "model"; }

Role parse_role(std::string_view name) {
  if (name == "human") return Role::kHuman;
  if (name == "model") return Role::kModel;
  throw InputError("unknown role: " + std::string(name));
}

double MockQualityScorer::score(std::string_view passage) {
  const auto words = split_whitespace(passage);
  if (words.empty()) throw InputError("cannot score an empty passage");
  std::size_t letters = 0;
  for (const auto& w : words) letters += w.size();
  return std::tanh(static_cast<double>(letters) / static_cast<double>(words.size()));
}

HttpQualityScorer::HttpQualityScorer(std::string url, std::string api_key_env,
                                     std::chrono::milliseconds timeout)
    : url_(std::move(url)), timeout_(timeout) {
  detail::parse_url(url_);
  if (!api_key_env.empty()) {
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
  }
}

double HttpQualityScorer::score(std::string_view passage) {
  const auto endpoint = detail::parse_url(url_);
  const nlohmann::json body = {{"text", std::string(passage)}};
  const auto response = detail::post_json(endpoint, endpoint.path_prefix.empty() ? "/" : endpoint.path_prefix,
                                          body, api_key_, timeout_, {});
  if (!response.contains("score") || !response["score"].is_number()) {
    throw TransportError("quality service response lacks a numeric score", false);
  }
  return response["score"].get<double>();
}

std::string quality_passage(std::string_view context, std::string_view continuation) {
  std::string passage(context);
  const bool has_space = !continuation.empty() &&
                         (continuation.front() == ' ' || continuation.front() == '\n' ||
                          continuation.front() == '\t' || continuation.front() == '\r');
  if (!passage.empty() && !has_space) passage += ' ';
  passage += continuation;
  return passage;
}

QualityScore score_quality(const std::string& story_id, std::size_t k, Role role,
                           std::string_view context, std::string_view continuation,
                           QualityScorer& scorer) {
  QualityScore out;
  out.story_id = story_id;
  out.k = k;
  out.role = role;
  const std::string passage = quality_passage(context, continuation);
  out.word_count = count_words(passage);
  if (out.word_count < kMinQualityWords || out.word_count > kMaxQualityWords) {
    out.excluded = true;
    return out;
  }
  try {
    out.score = scorer.score(passage);
  } catch (const TransportError& e) {
    throw PairError(story_id, k, e.what(), e.retryable());
  } catch (const std::exception& e) {
    throw PairError(story_id, k, e.what(), false);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InputError("spearman: length mismatch");
  if (xs.size() < 3) throw InputError("spearman needs at least 3 observations");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  Correlation c;
  c.n = xs.size();
  c.rho = std::clamp(stats::pearson(rx, ry), -1.0, 1.0);
  const double df = static_cast<double>(c.n - 2);
  if (std::abs(c.rho) >= 1.0) {
    c.p = 0.0;
  } else {
    const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
    c.p = stats::two_sided_t_pvalue(t, df);
  }
  return c;
}

namespace {

using Matrix3 = std::array<std::array<double, 3>, 3>;

// Gauss-Jordan inverse with partial pivoting.
Matrix3 invert(Matrix3 a) {
  Matrix3 inv{};
  for (int i = 0; i < 3; ++i) inv[i][i] = 1.0;
  double scale = 0.0;
  for (int i = 0; i < 3; ++i) scale = std::max(scale, std::abs(a[i][i]));
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) <= 1e-10 * scale) {
      throw RankDeficiencyError("quadratic design matrix is singular (fewer than 3 distinct x?)");
    }
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (int c = 0; c < 3; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

double coefficient_pvalue(double beta, double se, double df) {
  if (se == 0.0) return beta == 0.0 ? 1.0 : 0.0;
  return stats::two_sided_t_pvalue(beta / se, df);
}

}  // namespace

RegressionResult fit_quadratic(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InputError("fit_quadratic: length mismatch");
  const std::size_t n = xs.size();
  if (n < 4) throw InputError("fit_quadratic needs at least 4 observations");

  RegressionResult r;
  r.n = n;
  r.x_mean = stats::mean(xs);
  r.x_sd = stats::sample_sd(xs);
  if (!(r.x_sd > 0.0)) throw RankDeficiencyError("x is constant");

  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (xs[i] - r.x_mean) / r.x_sd;

  Matrix3 xtx{};
  std::array<double, 3> xty{};
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> row = {1.0, z[i], z[i] * z[i]};
    for (int a = 0; a < 3; ++a) {
      xty[a] += row[a] * ys[i];
      for (int b = 0; b < 3; ++b) xtx[a][b] += row[a] * row[b];
    }
  }
  const Matrix3 inv = invert(xtx);

  const double y_mean = stats::mean(ys);
  double sst = 0.0;
  for (double y : ys) sst += (y - y_mean) * (y - y_mean);

  std::array<double, 3> beta{};
  if (sst == 0.0) {
    beta = {y_mean, 0.0, 0.0};
  } else {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) beta[a] += inv[a][b] * xty[b];
    }
  }
  r.beta0 = beta[0];
  r.beta1 = beta[1];
  r.beta2 = beta[2];

  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (beta[0] + beta[1] * z[i] + beta[2] * z[i] * z[i]);
    sse += e * e;
  }
  // Nested linear fit; z has mean 0 so the intercept is the mean of y.
  double szy = 0.0;
  double szz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    szy += z[i] * (ys[i] - y_mean);
    szz += z[i] * z[i];
  }
  const double slope = sst == 0.0 ? 0.0 : szy / szz;
  double sse_lin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (y_mean + slope * z[i]);
    sse_lin += e * e;
  }

  if (sst > 0.0) {
    r.r2_quad = std::max(0.0, 1.0 - sse / sst);
    r.r2_lin = std::max(0.0, 1.0 - sse_lin / sst);
  }
  if (r.r2_quad < r.r2_lin - 1e-9) {
    throw std::logic_error("nested fit violated: quadratic R^2 below linear R^2");
  }
  r.r2_quad = std::max(r.r2_quad, r.r2_lin);
  r.delta_r2 = r.r2_quad - r.r2_lin;

  const double df = static_cast<double>(n - 3);
  const double sigma2 = sse / df;
  r.se1 = std::sqrt(std::max(0.0, sigma2 * inv[1][1]));
  r.se2 = std::sqrt(std::max(0.0, sigma2 * inv[2][2]));
  r.p1 = coefficient_pvalue(r.beta1, r.se1, df);
  r.p2 = coefficient_pvalue(r.beta2, r.se2, df);

  if (r.beta2 != 0.0) r.z_star = -r.beta1 / (2.0 * r.beta2);

  const double m = r.x_mean;
  const double s = r.x_sd;
  r.raw_coefficients = {r.beta0 - r.beta1 * m / s + r.beta2 * m * m / (s * s),
                        r.beta1 / s - 2.0 * r.beta2 * m / (s * s), r.beta2 / (s * s)};
  if (r.z_star) r.raw_peak = m + s * *r.z_star;
  return r;
}

const char* shape_name(ShapeClass shape) {
  switch (shape) {
    case ShapeClass::kLinear: return "Linear";
    case ShapeClass::kSweetSpot: return "SweetSpot";
    case ShapeClass::kDiminishing: return "Diminishing";
    case ShapeClass::kUShape: return "UShape";
    case ShapeClass::kFlatNS: return "FlatNS";
  }
  return "?";
}

ShapeClass classify_shape(const RegressionResult& reg, double alpha, double range_limit) {
  const bool quad_sig = reg.p2 < alpha;
  const bool in_range = reg.z_star && std::abs(*reg.z_star) <= range_limit;
  if (quad_sig && reg.beta2 < 0.0 && in_range) return ShapeClass::kSweetSpot;
  if (quad_sig && reg.beta2 < 0.0 && !in_range) return ShapeClass::kDiminishing;
  if (quad_sig && reg.beta2 > 0.0 && in_range) return ShapeClass::kUShape;
  if (reg.p1 < alpha && !quad_sig) return ShapeClass::kLinear;
  return ShapeClass::kFlatNS;
}

const char* metric_name(UncertaintyMetric m) {
  switch (m) {
    case UncertaintyMetric::kNll: return "NLL";
    case UncertaintyMetric::kPpl: return "PPL";
    case UncertaintyMetric::kPmi: return "PMI";
  }
  return "?";
}

double metric_value(const MetricSet& set, UncertaintyMetric m) {
  switch (m) {
    case UncertaintyMetric::kNll: return set.nll;
    case UncertaintyMetric::kPpl: return set.ppl;
    case UncertaintyMetric::kPmi: return set.pmi;
  }
  return 0.0;
}

int expected_sign(UncertaintyMetric m) { return m == UncertaintyMetric::kPmi ? -1 : 1; }

JoinResult join_observations(const std::vector<PairedRecord>& records,
                             const std::vector<QualityScore>& scores) {
  std::multimap<std::tuple<std::string, std::size_t>, const PairedRecord*> by_key;
  for (const auto& r : records) by_key.emplace(std::make_tuple(r.story_id, r.k), &r);

  JoinResult out;
  for (const auto& s : scores) {
    if (s.excluded) {
      ++out.excluded_scores;
      continue;
    }
    bool matched = false;
    auto [lo, hi] = by_key.equal_range({s.story_id, s.k});
    for (auto it = lo; it != hi; ++it) {
      const PairedRecord& r = *it->second;
      if (s.role == Role::kModel && !s.model_id.empty() && s.model_id != r.model_id) continue;
      Observation obs;
      obs.model_id = r.model_id;
      obs.dataset = r.dataset;
      obs.role = s.role;
      obs.metrics = s.role == Role::kHuman ? r.human : r.model;
      obs.quality = s.score;
      out.observations.push_back(std::move(obs));
      matched = true;
    }
    if (!matched) ++out.unmatched_scores;
  }
  return out;
}

std::size_t ShapeCounts::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

bool significant_in_direction(const Correlation& c, int sign, double alpha) {
  const bool matches = sign > 0 ? c.rho > 0.0 : c.rho < 0.0;
  return matches && c.p / 2.0 < alpha;
}

namespace {

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

RollupRow roll_up(const std::string& dataset, Role role, UncertaintyMetric metric,
                  const std::vector<const CorrelationRow*>& rows, double alpha) {
  RollupRow out;
  out.dataset = dataset;
  out.role = role;
  out.metric = metric;
  std::vector<double> rhos;
  std::vector<double> sweet_peaks;
  std::size_t sig_expected = 0, sig_pos = 0, sig_neg = 0, sweet = 0, linear = 0,
              diminishing = 0;
  double delta_r2 = 0.0, beta1 = 0.0, beta2 = 0.0;
  for (const CorrelationRow* row : rows) {
    if (!row->analysed()) continue;
    const Correlation& c = *row->correlation;
    const RegressionResult& reg = *row->regression;
    rhos.push_back(c.rho);
    if (significant_in_direction(c, expected_sign(metric), alpha)) ++sig_expected;
    if (significant_in_direction(c, +1, alpha)) ++sig_pos;
    if (significant_in_direction(c, -1, alpha)) ++sig_neg;
    if (row->shape == ShapeClass::kSweetSpot) {
      ++sweet;
      sweet_peaks.push_back(*reg.z_star);
    }
    if (row->shape == ShapeClass::kLinear) ++linear;
    if (row->shape == ShapeClass::kDiminishing) ++diminishing;
    delta_r2 += reg.delta_r2;
    beta1 += reg.beta1;
    beta2 += reg.beta2;
  }
  out.groups = rhos.size();
  if (out.groups == 0) return out;
  const double g = static_cast<double>(out.groups);
  out.mean_rho = stats::mean(rhos);
  out.sd_rho = stats::sample_sd(rhos);
  out.pct_significant_expected = percent(sig_expected, out.groups);
  out.pct_significant_positive = percent(sig_pos, out.groups);
  out.pct_significant_negative = percent(sig_neg, out.groups);
  out.pct_sweet_spot = percent(sweet, out.groups);
  out.pct_linear = percent(linear, out.groups);
  out.pct_diminishing = percent(diminishing, out.groups);
  if (!sweet_peaks.empty()) out.mean_z_star = stats::mean(sweet_peaks);
  out.mean_delta_r2 = delta_r2 / g;
  out.mean_beta1 = beta1 / g;
  out.mean_beta2 = beta2 / g;
  return out;
}

}  // namespace

QualitySummary correlate(const std::vector<Observation>& observations,
                         const CorrelateOptions& options) {
  using GroupId = std::tuple<std::string, std::string, int>;  // model, dataset, role
  std::map<GroupId, std::vector<const Observation*>> groups;
  for (const auto& obs : observations) {
    groups[{obs.model_id, obs.dataset, static_cast<int>(obs.role)}].push_back(&obs);
  }

  QualitySummary out;
  for (const auto& [id, members] : groups) {
    const auto& [model_id, dataset, role_index] = id;
    const Role role = static_cast<Role>(role_index);
    std::vector<double> ys;
    ys.reserve(members.size());
    for (const Observation* o : members) ys.push_back(o->quality);

    for (UncertaintyMetric metric : kUncertaintyMetrics) {
      CorrelationRow row;
      row.model_id = model_id;
      row.dataset = dataset;
      row.role = role;
      row.metric = metric;
      row.n = members.size();
      const std::string where = model_id + "/" + dataset + "/" + role_name(role) + "/" +
                                metric_name(metric);
      if (row.n < options.min_n) {
        row.diagnostic = "undersized group (n=" + std::to_string(row.n) + " < " +
                         std::to_string(options.min_n) + ")";
      } else {
        std::vector<double> xs;
        xs.reserve(members.size());
        for (const Observation* o : members) xs.push_back(metric_value(o->metrics, metric));
        try {
          row.correlation = spearman(xs, ys);
          row.regression = fit_quadratic(xs, ys);
          row.shape = classify_shape(*row.regression, options.alpha, options.range_limit);
        } catch (const UndefinedCorrelationError& e) {
          row.correlation.reset();
          row.regression.reset();
          row.diagnostic = std::string("undefined correlation: ") + e.what();
        } catch (const RankDeficiencyError& e) {
          row.correlation.reset();
          row.regression.reset();
          row.diagnostic = std::string("rank-deficient regression: ") + e.what();
        }
      }
      if (!row.diagnostic.empty()) out.diagnostics.push_back(where + ": " + row.diagnostic);
      out.rows.push_back(std::move(row));
    }
  }

  std::map<std::tuple<std::string, int, int>, std::vector<const CorrelationRow*>> by_dataset;
  std::map<std::tuple<int, int>, std::vector<const CorrelationRow*>> pooled;
  for (const auto& row : out.rows) {
    by_dataset[{row.dataset, static_cast<int>(row.role), static_cast<int>(row.metric)}]
        .push_back(&row);
    pooled[{static_cast<int>(row.role), static_cast<int>(row.metric)}].push_back(&row);
  }
  for (const auto& [key, rows] : pooled) {
    const auto role = static_cast<Role>(std::get<0>(key));
    const auto metric = static_cast<UncertaintyMetric>(std::get<1>(key));
    out.rollup.push_back(roll_up("*", role, metric, rows, options.alpha));

    ShapeCounts counts;
    counts.role = role;
    counts.metric = metric;
    for (const CorrelationRow* row : rows) ++counts.counts[static_cast<int>(row->shape)];
    out.shapes.push_back(counts);
  }
  for (const auto& [key, rows] : by_dataset) {
    out.detail.push_back(roll_up(std::get<0>(key), static_cast<Role>(std::get<1>(key)),
                                 static_cast<UncertaintyMetric>(std::get<2>(key)), rows,
                                 options.alpha));
  }
  return out;
}

}  // namespace ugap
