#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ugap/backend.hpp"
#include "ugap/corpus.hpp"
#include "ugap/metrics.hpp"

namespace ugap {

/// Human and model metrics for one context.
struct PairedRecord {
  std::string story_id;
  std::size_t k = 0;
  std::string dataset;
  std::string domain;
  std::string model_id;
  MetricSet human;
  MetricSet model;
  bool length_mismatch = false;
  bool truncated = false;
  std::string model_text;  // the sampled continuation

  bool operator==(const PairedRecord&) const = default;
};

/// Ratios (human / model) for NLL and PPL, differences (human - model) for PMI and CPMI.
struct GapValues {
  double nll_ratio = 1.0;
  double ppl_ratio = 1.0;
  double pmi_diff = 0.0;
  double cpmi_diff = 0.0;

  bool operator==(const GapValues&) const = default;
};

enum class GapMetric { kNll = 0, kPpl = 1, kPmi = 2, kCpmi = 3 };
inline constexpr std::array<GapMetric, 4> kGapMetrics = {GapMetric::kNll, GapMetric::kPpl,
                                                         GapMetric::kPmi, GapMetric::kCpmi};
double field(const GapValues& v, GapMetric m);
const char* metric_name(GapMetric m);

/// Grouping key; a collapsed dimension holds "*".
struct GroupKey {
  std::string model_id;
  std::string dataset;
  std::string domain;

  auto operator<=>(const GroupKey&) const = default;
};

struct GroupBy {
  bool model = true;
  bool dataset = true;
  bool domain = true;
};

struct GapSummary {
  GroupKey key;
  GapValues median;
  std::size_t count = 0;     // records that entered the medians
  std::size_t excluded = 0;  // degenerate denominators
  std::size_t mismatched = 0;  // records whose model length differs from the human length
  /// 1 = smallest gap in the report, 5 = largest; 0 until bucketize runs.
  std::array<int, 4> buckets{};

  bool operator==(const GapSummary&) const = default;

  double mismatch_rate() const {
    const std::size_t total = count + excluded;
    return total == 0 ? 0.0 : static_cast<double>(mismatched) / static_cast<double>(total);
  }
};

struct EvaluationSettings {
  SamplingConfig sampling;
  std::optional<std::uint64_t> seed;
  double tau = kDefaultTau;
  double lambda = kDefaultLambda;
};

/// Everything produced while evaluating one pair.
struct PairEvaluation {
  PairedRecord record;
  TokenTrace human_conditional;
  TokenTrace human_unconditional;
  Generation generation;  // its trace is the model's conditional trace
  TokenTrace model_unconditional;
};

/// The text actually scored after the context: the original separator (or a
/// single space when there is none) followed by the continuation.
std::string scored_continuation(const SegmentPair& pair);

/// Four backend calls: conditional and unconditional scoring of the human
/// continuation, a length-matched generation, and unconditional scoring of
/// the generated text. Errors are rethrown as PairError.
PairEvaluation evaluate_pair_traced(const SegmentPair& pair, Backend& backend,
                                    const EvaluationSettings& settings);
PairedRecord evaluate_pair(const SegmentPair& pair, Backend& backend,
                           const EvaluationSettings& settings);

/// Throws DegenerateError when the model's NLL or PPL is zero.
GapValues gap_values(const PairedRecord& record);

/// Median with the even-count rule (mean of the two middle values).
double median(std::vector<double> values);

/// Per-group medians over pooled records, sorted by key.
std::vector<GapSummary> aggregate_median(const std::vector<PairedRecord>& records,
                                         GroupBy group_by);

/// Medians of per-model medians: records are first summarized per model
/// within each outer group, then the model medians are reduced by median.
/// The model dimension of the outer key is always collapsed.
std::vector<GapSummary> aggregate_median_of_medians(const std::vector<PairedRecord>& records,
                                                    GroupBy group_by);

/// Percent by which the creative |PMI gap| exceeds the functional one.
double relative_pmi_increase(const GapSummary& creative, const GapSummary& functional);

/// Gap magnitude used for bucketing: the ratio itself for NLL/PPL, the
/// negated difference for PMI/CPMI (more negative = larger human excess).
double gap_magnitude(const GapValues& v, GapMetric m);

/// Assigns report-relative quintile buckets per metric across `summaries`.
void bucketize(std::vector<GapSummary>& summaries);

}  // namespace ugap
