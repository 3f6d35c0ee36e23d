#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ugap/gap.hpp"
#include "ugap/metrics.hpp"

namespace ugap {

enum class Role { kHuman, kModel };
const char* role_name(Role role);
Role parse_role(std::string_view name);

inline constexpr std::size_t kMinQualityWords = 150;
inline constexpr std::size_t kMaxQualityWords = 400;

struct QualityScore {
  std::string story_id;
  std::size_t k = 0;
  Role role = Role::kHuman;
  double score = 0.0;  // meaningless when excluded
  std::size_t word_count = 0;
  bool excluded = false;
  /// Model-role scores name their model; empty matches every model.
  std::string model_id;

  bool operator==(const QualityScore&) const = default;
};

/// Maps a passage to a scalar quality score.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(std::string_view passage) = 0;
};

/// tanh of the mean word length in bytes.
class MockQualityScorer : public QualityScorer {
 public:
  double score(std::string_view passage) override;
};

/// POSTs {"text": passage} to `url` and reads a numeric "score" field back.
class HttpQualityScorer : public QualityScorer {
 public:
  HttpQualityScorer(std::string url, std::string api_key_env = {},
                    std::chrono::milliseconds timeout = std::chrono::seconds(60));
  double score(std::string_view passage) override;

 private:
  std::string url_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

/// The scored passage: context and continuation joined by whitespace.
std::string quality_passage(std::string_view context, std::string_view continuation);

/// Applies the 150-400 word window before calling the scorer. Scorer
/// failures are rethrown as PairError.
QualityScore score_quality(const std::string& story_id, std::size_t k, Role role,
                           std::string_view context, std::string_view continuation,
                           QualityScorer& scorer);

struct Correlation {
  double rho = 0.0;
  double p = 1.0;  // two-sided
  std::size_t n = 0;
};

/// Average ranks (1-based); ties receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> xs);

/// Tie-corrected Spearman rho with a t-distribution p-value (n - 2 df).
Correlation spearman(std::span<const double> xs, std::span<const double> ys);

/// OLS fit of y on [1, z, z^2] where z is x standardized by its sample mean
/// and n-1 standard deviation.
struct RegressionResult {
  // On standardized x.
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double se1 = 0.0;
  double se2 = 0.0;
  double p1 = 1.0;
  double p2 = 1.0;
  double r2_quad = 0.0;
  double r2_lin = 0.0;
  double delta_r2 = 0.0;
  std::optional<double> z_star;  // -beta1 / (2 beta2), standardized units
  std::size_t n = 0;

  // The same parabola in the original x units.
  double x_mean = 0.0;
  double x_sd = 1.0;
  std::array<double, 3> raw_coefficients{};
  std::optional<double> raw_peak;
};

RegressionResult fit_quadratic(std::span<const double> xs, std::span<const double> ys);

enum class ShapeClass { kLinear, kSweetSpot, kDiminishing, kUShape, kFlatNS };
inline constexpr std::array<ShapeClass, 5> kShapeClasses = {
    ShapeClass::kLinear, ShapeClass::kSweetSpot, ShapeClass::kDiminishing, ShapeClass::kUShape,
    ShapeClass::kFlatNS};
const char* shape_name(ShapeClass shape);

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultRangeLimit = 2.5;

ShapeClass classify_shape(const RegressionResult& reg, double alpha = kDefaultAlpha,
                          double range_limit = kDefaultRangeLimit);

enum class UncertaintyMetric { kNll, kPpl, kPmi };
inline constexpr std::array<UncertaintyMetric, 3> kUncertaintyMetrics = {
    UncertaintyMetric::kNll, UncertaintyMetric::kPpl, UncertaintyMetric::kPmi};
const char* metric_name(UncertaintyMetric m);
double metric_value(const MetricSet& set, UncertaintyMetric m);
/// +1 where higher uncertainty is expected to go with higher quality (NLL, PPL), -1 for PMI.
int expected_sign(UncertaintyMetric m);

/// One (uncertainty, quality) point.
struct Observation {
  std::string model_id;
  std::string dataset;
  Role role = Role::kHuman;
  MetricSet metrics;
  double quality = 0.0;
};

struct JoinResult {
  std::vector<Observation> observations;
  std::size_t unmatched_scores = 0;  // scores with no record
  std::size_t excluded_scores = 0;   // outside the word window
};

/// Joins records and scores on (story_id, k, role). A human score applies to
/// every model's record for that pair; a model score only to its own model.
JoinResult join_observations(const std::vector<PairedRecord>& records,
                             const std::vector<QualityScore>& scores);

struct CorrelationRow {
  std::string model_id;
  std::string dataset;
  Role role = Role::kHuman;
  UncertaintyMetric metric = UncertaintyMetric::kNll;
  std::size_t n = 0;
  std::optional<Correlation> correlation;
  std::optional<RegressionResult> regression;
  /// FlatNS for rows that could not be analysed.
  ShapeClass shape = ShapeClass::kFlatNS;
  /// Empty when the row was analysed; otherwise why it was skipped.
  std::string diagnostic;

  bool analysed() const { return correlation.has_value() && regression.has_value(); }
};

/// Aggregate over groups sharing (dataset, role, metric); dataset "*" pools
/// every dataset.
struct RollupRow {
  std::string dataset;
  Role role = Role::kHuman;
  UncertaintyMetric metric = UncertaintyMetric::kNll;
  std::size_t groups = 0;  // analysed groups
  double mean_rho = 0.0;
  double sd_rho = 0.0;
  double pct_significant_expected = 0.0;
  double pct_significant_positive = 0.0;
  double pct_significant_negative = 0.0;
  double pct_sweet_spot = 0.0;
  double pct_linear = 0.0;
  double pct_diminishing = 0.0;
  std::optional<double> mean_z_star;  // over sweet-spot groups
  double mean_delta_r2 = 0.0;
  double mean_beta1 = 0.0;
  double mean_beta2 = 0.0;
};

struct ShapeCounts {
  Role role = Role::kHuman;
  UncertaintyMetric metric = UncertaintyMetric::kNll;
  std::array<std::size_t, 5> counts{};  // indexed like kShapeClasses

  std::size_t total() const;
};

struct CorrelateOptions {
  std::size_t min_n = 10;
  double alpha = kDefaultAlpha;
  double range_limit = kDefaultRangeLimit;
};

struct QualitySummary {
  std::vector<CorrelationRow> rows;     // one per group x metric, sorted
  std::vector<RollupRow> rollup;        // dataset "*"
  std::vector<RollupRow> detail;        // per dataset
  std::vector<ShapeCounts> shapes;      // per role x metric
  std::vector<std::string> diagnostics;
};

/// Significant in the direction of `sign` at level alpha, one-sided (p/2).
bool significant_in_direction(const Correlation& c, int sign, double alpha = kDefaultAlpha);

QualitySummary correlate(const std::vector<Observation>& observations,
                         const CorrelateOptions& options = {});

}  // namespace ugap
