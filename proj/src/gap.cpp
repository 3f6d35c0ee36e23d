#include "ugap/gap.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ugap/errors.hpp"

namespace ugap {

double field(const GapValues& v, GapMetric m) {
  switch (m) {
    case GapMetric::kNll: return v.nll_ratio;
    case GapMetric::kPpl: return v.ppl_ratio;
    case GapMetric::kPmi: return v.pmi_diff;
    case GapMetric::kCpmi: return v.cpmi_diff;
  }
  return 0.0;
}

const char* metric_name(GapMetric m) {
  switch (m) {
    case GapMetric::kNll: return "NLL";
    case GapMetric::kPpl: return "PPL";
    case GapMetric::kPmi: return "PMI";
    case GapMetric::kCpmi: return "CPMI";
  }
  return "?";
}

std::string scored_continuation(const SegmentPair& pair) {
  return (pair.separator.empty() ? std::string(" ") : pair.separator) + pair.continuation;
}

PairEvaluation evaluate_pair_traced(const SegmentPair& pair, Backend& backend,
                                    const EvaluationSettings& settings) {
  try {
    if (pair.context.empty()) throw InputError("context is empty");
    const std::string human_text = scored_continuation(pair);

    PairEvaluation ev;
    ev.human_conditional = backend.score_conditional(pair.context, human_text);
    ev.human_unconditional = backend.score_unconditional(human_text);

    SamplingConfig sampling = settings.sampling;
    if (settings.seed) sampling.seed = derive_seed(*settings.seed, pair.story_id, pair.k);
    const std::size_t n = std::min(ev.human_conditional.size(), sampling.max_tokens);
    ev.generation = backend.generate(pair.context, n, sampling);
    ev.model_unconditional = backend.score_unconditional(ev.generation.text);

    PairedRecord& rec = ev.record;
    rec.story_id = pair.story_id;
    rec.k = pair.k;
    rec.dataset = pair.dataset;
    rec.domain = pair.domain;
    rec.model_id = backend.model_id();
    rec.human = metric_set(ev.human_conditional, ev.human_unconditional, settings.tau,
                           settings.lambda);
    rec.model = metric_set(ev.generation.trace, ev.model_unconditional, settings.tau,
                           settings.lambda);
    rec.length_mismatch = rec.model.n_tokens != rec.human.n_tokens;
    rec.truncated = ev.generation.truncated;
    rec.model_text = ev.generation.text;
    return ev;
  } catch (const PairError&) {
    throw;
  } catch (const TransportError& e) {
    throw PairError(pair.story_id, pair.k, e.what(), e.retryable());
  } catch (const std::exception& e) {
    throw PairError(pair.story_id, pair.k, e.what(), false);
  }
}

PairedRecord evaluate_pair(const SegmentPair& pair, Backend& backend,
                           const EvaluationSettings& settings) {
  return evaluate_pair_traced(pair, backend, settings).record;
}

GapValues gap_values(const PairedRecord& record) {
  if (record.model.nll == 0.0 || record.model.ppl == 0.0) {
    throw DegenerateError("model NLL is zero for pair (" + record.story_id + ", " +
                          std::to_string(record.k) + ")");
  }
  GapValues v;
  v.nll_ratio = record.human.nll / record.model.nll;
  v.ppl_ratio = record.human.ppl / record.model.ppl;
  v.pmi_diff = record.human.pmi - record.model.pmi;
  v.cpmi_diff = record.human.cpmi - record.model.cpmi;
  return v;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

namespace {

GroupKey key_for(const PairedRecord& r, GroupBy g) {
  return {g.model ? r.model_id : "*", g.dataset ? r.dataset : "*", g.domain ? r.domain : "*"};
}

struct Accumulator {
  std::array<std::vector<double>, 4> values;
  std::size_t excluded = 0;
  std::size_t mismatched = 0;
};

GapValues medians_of(const std::array<std::vector<double>, 4>& values) {
  return {median(values[0]), median(values[1]), median(values[2]), median(values[3])};
}

std::map<GroupKey, Accumulator> accumulate(const std::vector<PairedRecord>& records,
                                           GroupBy group_by) {
  std::map<GroupKey, Accumulator> groups;
  for (const auto& r : records) {
    Accumulator& acc = groups[key_for(r, group_by)];
    if (r.length_mismatch) ++acc.mismatched;
    GapValues v;
    try {
      v = gap_values(r);
    } catch (const DegenerateError&) {
      ++acc.excluded;
      continue;
    }
    for (GapMetric m : kGapMetrics) acc.values[static_cast<int>(m)].push_back(field(v, m));
  }
  return groups;
}

}  // namespace

std::vector<GapSummary> aggregate_median(const std::vector<PairedRecord>& records,
                                         GroupBy group_by) {
  std::vector<GapSummary> out;
  for (auto& [key, acc] : accumulate(records, group_by)) {
    if (acc.values[0].empty()) continue;  // every record degenerate
    GapSummary s;
    s.key = key;
    s.median = medians_of(acc.values);
    s.count = acc.values[0].size();
    s.excluded = acc.excluded;
    s.mismatched = acc.mismatched;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<GapSummary> aggregate_median_of_medians(const std::vector<PairedRecord>& records,
                                                    GroupBy group_by) {
  GroupBy inner = group_by;
  inner.model = true;
  const std::vector<GapSummary> per_model = aggregate_median(records, inner);

  std::map<GroupKey, std::vector<const GapSummary*>> outer;
  for (const auto& s : per_model) {
    GroupKey key = s.key;
    key.model_id = "*";
    outer[key].push_back(&s);
  }
  std::vector<GapSummary> out;
  for (const auto& [key, members] : outer) {
    std::array<std::vector<double>, 4> values;
    GapSummary s;
    s.key = key;
    for (const GapSummary* m : members) {
      for (GapMetric metric : kGapMetrics) {
        values[static_cast<int>(metric)].push_back(field(m->median, metric));
      }
      s.count += m->count;
      s.excluded += m->excluded;
      s.mismatched += m->mismatched;
    }
    s.median = medians_of(values);
    out.push_back(std::move(s));
  }
  return out;
}

double relative_pmi_increase(const GapSummary& creative, const GapSummary& functional) {
  const double c = creative.median.pmi_diff;
  const double f = functional.median.pmi_diff;
  if (f == 0.0) throw DegenerateError("functional PMI gap is zero; relative increase undefined");
  if (!(c < 0.0 && f < 0.0)) {
    throw InputError("relative PMI increase needs negative PMI gaps in both domains");
  }
  return 100.0 * (std::abs(c) - std::abs(f)) / std::abs(f);
}

double gap_magnitude(const GapValues& v, GapMetric m) {
  switch (m) {
    case GapMetric::kNll:
    case GapMetric::kPpl: return field(v, m);
    case GapMetric::kPmi:
    case GapMetric::kCpmi: return -field(v, m);
  }
  return 0.0;
}

void bucketize(std::vector<GapSummary>& summaries) {
  const std::size_t n = summaries.size();
  for (GapMetric m : kGapMetrics) {
    std::vector<double> sorted;
    sorted.reserve(n);
    for (const auto& s : summaries) sorted.push_back(gap_magnitude(s.median, m));
    std::sort(sorted.begin(), sorted.end());
    for (auto& s : summaries) {
      const double v = gap_magnitude(s.median, m);
      // Ties share the lowest rank of their run.
      const auto rank = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
      const std::size_t bucket = n < 5 ? rank + 1 : 1 + (5 * rank) / n;
      s.buckets[static_cast<int>(m)] = static_cast<int>(bucket);
    }
  }
}

}  // namespace ugap
