#pragma once

// Report emission: the gap table, the domain comparison, and the quality
// correlation tables, each as CSV (full precision) and Markdown (display).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ugap/gap.hpp"
#include "ugap/quality.hpp"

namespace ugap {

enum class TableFormat { kCsv, kMarkdown };

/// "csv", "md" or "markdown". Anything else is a ConfigError.
TableFormat parse_format(std::string_view name);
const char* format_extension(TableFormat format);

/// Ordered provenance entries written as a comment block atop every file.
using RunMetadata = std::vector<std::pair<std::string, std::string>>;

/// Shortest text that parses back to the identical double.
std::string format_full(double value);
/// Two decimals, never "-0.00".
std::string format_fixed(double value, int decimals = 2);
/// "***", "**", "*" at p < 0.001, 0.01, 0.05; otherwise empty.
std::string significance_stars(double p);

// Gap table: one row per model, NLL/PPL/PMI/CPMI per dataset column group,
// then the bucket labels as a second column set.
std::string render_gap_table(const std::vector<GapSummary>& summaries, TableFormat format,
                             const RunMetadata& metadata);
void emit_gap_table(const std::vector<GapSummary>& summaries, TableFormat format,
                    const std::filesystem::path& path, const RunMetadata& metadata);

/// Parses summaries back out of a gap or domain CSV. With a non-empty
/// `section`, only rows of that section are returned.
std::vector<GapSummary> parse_summary_csv(std::string_view csv, std::string_view section = {});

struct RelativeIncrease {
  std::string model_id;  // "*" for the pooled row
  std::string versus;    // the functional domain
  std::optional<double> percent;  // empty when undefined
};

struct DomainReport {
  std::string creative_domain;
  std::vector<GapSummary> pooled;             // one per domain
  std::vector<GapSummary> median_of_medians;  // one per domain
  std::vector<GapSummary> per_model;          // models x domains
  std::vector<RelativeIncrease> increases;    // per model, then pooled
  std::vector<std::string> diagnostics;
};

/// Needs at least two domains; throws InputError otherwise.
DomainReport build_domain_report(const std::vector<PairedRecord>& records,
                                 const std::string& creative_domain);

std::string render_domain_table(const DomainReport& report, TableFormat format,
                                const RunMetadata& metadata);
void emit_domain_table(const DomainReport& report, TableFormat format,
                       const std::filesystem::path& path, const RunMetadata& metadata);

std::string render_quality_rollup(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata);
std::string render_quality_detail(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata);
std::string render_quality_per_model(const QualitySummary& summary, TableFormat format,
                                     const RunMetadata& metadata);
std::string render_quality_shapes(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata);

/// Writes quality_{rollup,detail,per_model,shapes}.{csv,md} into `dir`.
void emit_quality_tables(const QualitySummary& summary, const std::filesystem::path& dir,
                         const RunMetadata& metadata);

/// Minimal RFC 4180 reader; '#' comment lines and blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace ugap
