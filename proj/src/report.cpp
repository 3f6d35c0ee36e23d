#include "ugap/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ugap/errors.hpp"
#include "ugap/records.hpp"

namespace ugap {

TableFormat parse_format(std::string_view name) {
  if (name == "csv") return TableFormat::kCsv;
  if (name == "md" || name == "markdown") return TableFormat::kMarkdown;
  throw ConfigError("unknown report format: " + std::string(name));
}

const char* format_extension(TableFormat format) {
  return format == TableFormat::kCsv ? "csv" : "md";
}

std::string format_full(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::logic_error("to_chars failed");
  return std::string(buf, end);
}

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::string header_block(const RunMetadata& metadata, TableFormat format) {
  std::string out;
  if (format == TableFormat::kCsv) {
    for (const auto& [k, v] : metadata) out += "# " + k + ": " + one_line(v) + "\n";
    return out;
  }
  out += "<!--\n";
  for (const auto& [k, v] : metadata) {
    std::string value = one_line(v);
    // Keep the comment well-formed.
    for (std::size_t pos; (pos = value.find("--")) != std::string::npos;) value.replace(pos, 2, "- -");
    out += k + ": " + value + "\n";
  }
  out += "-->\n\n";
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

std::string md_cell(std::string s) {
  for (std::size_t pos = 0; (pos = s.find('|', pos)) != std::string::npos; pos += 2) s.replace(pos, 1, "\\|");
  return s;
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + md_cell(c) + " |";
  return out + "\n";
}

/// Header row plus the alignment row; the first column is left-aligned.
std::string md_head(const std::vector<std::string>& cells, std::size_t left_columns = 1) {
  std::string out = md_row(cells) + "|";
  for (std::size_t i = 0; i < cells.size(); ++i) out += i < left_columns ? "---|" : "---:|";
  return out + "\n";
}

std::string model_label(const std::string& id) { return id == "*" ? "All models" : id; }

std::string role_label(Role role) { return role == Role::kHuman ? "Human" : "Model"; }

std::string percent_cell(double pct) { return format_fixed(pct, 0) + "%"; }

std::string signed_fixed(double v, int decimals) {
  std::string s = format_fixed(v, decimals);
  return s.front() == '-' || s == format_fixed(0.0, decimals) ? s : "+" + s;
}

void require_nonempty(bool empty, const char* section) {
  if (empty) throw InputError(std::string("empty report section: ") + section);
}

const std::vector<std::string> kSummaryColumns = {
    "model_id",  "dataset",    "domain",     "count",      "excluded",
    "mismatched", "nll_ratio", "ppl_ratio",  "pmi_diff",   "cpmi_diff",
    "bucket_nll", "bucket_ppl", "bucket_pmi", "bucket_cpmi", "mismatch_rate"};

std::vector<std::string> summary_fields(const GapSummary& s) {
  return {s.key.model_id,
          s.key.dataset,
          s.key.domain,
          std::to_string(s.count),
          std::to_string(s.excluded),
          std::to_string(s.mismatched),
          format_full(s.median.nll_ratio),
          format_full(s.median.ppl_ratio),
          format_full(s.median.pmi_diff),
          format_full(s.median.cpmi_diff),
          std::to_string(s.buckets[0]),
          std::to_string(s.buckets[1]),
          std::to_string(s.buckets[2]),
          std::to_string(s.buckets[3]),
          format_full(s.mismatch_rate())};
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw InputError("not a number: " + s);
  return v;
}

long long parse_integer(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw InputError("not an integer: " + s);
  return v;
}

std::string gap_cell(const GapSummary& s, GapMetric m) { return format_fixed(field(s.median, m)); }

// Column groups of the gap table, as (dataset, domain).
using ColumnGroup = std::pair<std::string, std::string>;

std::string group_label(const ColumnGroup& g) {
  if (g.second == "*") return g.first == "*" ? "all" : g.first;
  return g.first == "*" ? g.second : g.first + "/" + g.second;
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
      ++i;
      continue;
    }
    if (text[i] == '\n' || text[i] == '\r') {
      ++i;
      continue;
    }
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (c == '\n' || c == '\r') {
        break;
      } else {
        field += c;
      }
    }
    if (quoted) throw InputError("unterminated quoted CSV field");
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<GapSummary> parse_summary_csv(std::string_view csv, std::string_view section) {
  const auto rows = parse_csv(csv);
  if (rows.empty()) throw InputError("CSV has no header");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
  for (const auto& name : kSummaryColumns) {
    if (!col.count(name)) throw InputError("CSV lacks column " + name);
  }
  const bool has_section = col.count("section") > 0;
  std::vector<GapSummary> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != rows[0].size()) throw InputError("CSV row " + std::to_string(r) + " has the wrong width");
    auto at = [&](const std::string& name) -> const std::string& { return row[col.at(name)]; };
    if (has_section) {
      if (!section.empty() && at("section") != section) continue;
      if (at("nll_ratio").empty()) continue;
    }
    GapSummary s;
    s.key = {at("model_id"), at("dataset"), at("domain")};
    s.count = static_cast<std::size_t>(parse_integer(at("count")));
    s.excluded = static_cast<std::size_t>(parse_integer(at("excluded")));
    s.mismatched = static_cast<std::size_t>(parse_integer(at("mismatched")));
    s.median.nll_ratio = parse_double(at("nll_ratio"));
    s.median.ppl_ratio = parse_double(at("ppl_ratio"));
    s.median.pmi_diff = parse_double(at("pmi_diff"));
    s.median.cpmi_diff = parse_double(at("cpmi_diff"));
    s.buckets[0] = static_cast<int>(parse_integer(at("bucket_nll")));
    s.buckets[1] = static_cast<int>(parse_integer(at("bucket_ppl")));
    s.buckets[2] = static_cast<int>(parse_integer(at("bucket_pmi")));
    s.buckets[3] = static_cast<int>(parse_integer(at("bucket_cpmi")));
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_gap_table(const std::vector<GapSummary>& summaries, TableFormat format,
                             const RunMetadata& metadata) {
  require_nonempty(summaries.empty(), "gap table");
  std::string out = header_block(metadata, format);
  if (format == TableFormat::kCsv) {
    out += csv_row(kSummaryColumns);
    for (const auto& s : summaries) out += csv_row(summary_fields(s));
    return out;
  }

  std::set<std::string> models;
  std::set<ColumnGroup> groups;
  std::map<std::pair<std::string, ColumnGroup>, const GapSummary*> cells;
  for (const auto& s : summaries) {
    const ColumnGroup g{s.key.dataset, s.key.domain};
    models.insert(s.key.model_id);
    groups.insert(g);
    cells[{s.key.model_id, g}] = &s;
  }
  const bool prefix = groups.size() > 1;
  auto label = [&](const ColumnGroup& g, const char* metric, const char* suffix) {
    std::string l = prefix ? group_label(g) + " " : "";
    return l + metric + suffix;
  };

  out += "# Human-model uncertainty gap\n\n";
  out += "Medians per cell. NLL and PPL are ratios (human/model); PMI and CPMI are differences "
         "(human - model), so a negative difference means the human text is less predictable. "
         "Bucket columns rank each metric's gap within this report from 1 (smallest) to 5 "
         "(largest).\n\n";
  std::vector<std::string> head = {"Model"};
  for (const auto& g : groups)
    for (GapMetric m : kGapMetrics) head.push_back(label(g, metric_name(m), ""));
  for (const auto& g : groups)
    for (GapMetric m : kGapMetrics) head.push_back(label(g, metric_name(m), " bucket"));
  out += md_head(head);
  for (const auto& model : models) {
    std::vector<std::string> row = {model_label(model)};
    for (const auto& g : groups) {
      auto it = cells.find({model, g});
      for (GapMetric m : kGapMetrics) row.push_back(it == cells.end() ? "" : gap_cell(*it->second, m));
    }
    for (const auto& g : groups) {
      auto it = cells.find({model, g});
      for (std::size_t m = 0; m < kGapMetrics.size(); ++m)
        row.push_back(it == cells.end() ? "" : std::to_string(it->second->buckets[m]));
    }
    out += md_row(row);
  }

  out += "\n## Coverage\n\n";
  out += md_head({"Model", "Dataset", "Domain", "Records", "Excluded", "Length mismatch"}, 3);
  for (const auto& s : summaries) {
    out += md_row({model_label(s.key.model_id), s.key.dataset, s.key.domain,
                   std::to_string(s.count), std::to_string(s.excluded),
                   format_fixed(100.0 * s.mismatch_rate(), 1) + "%"});
  }
  return out;
}

void emit_gap_table(const std::vector<GapSummary>& summaries, TableFormat format,
                    const std::filesystem::path& path, const RunMetadata& metadata) {
  write_text_atomic(path, render_gap_table(summaries, format, metadata));
}

DomainReport build_domain_report(const std::vector<PairedRecord>& records,
                                 const std::string& creative_domain) {
  DomainReport report;
  report.creative_domain = creative_domain;
  const GroupBy by_domain{false, false, true};
  report.pooled = aggregate_median(records, by_domain);
  if (report.pooled.size() < 2) {
    throw InputError("domain comparison needs at least two domains, found " +
                     std::to_string(report.pooled.size()));
  }
  bucketize(report.pooled);
  report.median_of_medians = aggregate_median_of_medians(records, by_domain);
  bucketize(report.median_of_medians);
  report.per_model = aggregate_median(records, GroupBy{true, false, true});
  bucketize(report.per_model);

  std::set<std::string> domains;
  for (const auto& s : report.pooled) domains.insert(s.key.domain);
  if (!domains.count(creative_domain)) {
    report.diagnostics.push_back("no records in domain '" + creative_domain +
                                 "'; relative PMI increase omitted");
    return report;
  }

  auto increase = [&](const GapSummary* c, const GapSummary* f) -> std::optional<double> {
    if (!c || !f) return std::nullopt;
    try {
      return relative_pmi_increase(*c, *f);
    } catch (const Error& e) {
      report.diagnostics.push_back("relative PMI increase undefined for " +
                                   model_label(c->key.model_id) + " vs " + f->key.domain +
                                   ": " + e.what());
      return std::nullopt;
    }
  };

  std::map<std::pair<std::string, std::string>, const GapSummary*> by_model;
  std::set<std::string> models;
  for (const auto& s : report.per_model) {
    by_model[{s.key.model_id, s.key.domain}] = &s;
    models.insert(s.key.model_id);
  }
  std::map<std::string, const GapSummary*> pooled;
  for (const auto& s : report.pooled) pooled[s.key.domain] = &s;

  for (const auto& model : models) {
    auto c = by_model.find({model, creative_domain});
    for (const auto& d : domains) {
      if (d == creative_domain) continue;
      auto f = by_model.find({model, d});
      report.increases.push_back(
          {model, d,
           increase(c == by_model.end() ? nullptr : c->second,
                    f == by_model.end() ? nullptr : f->second)});
    }
  }
  for (const auto& d : domains) {
    if (d == creative_domain) continue;
    report.increases.push_back({"*", d, increase(pooled[creative_domain], pooled[d])});
  }
  return report;
}

namespace {

/// Mean of the defined per-model percents against `versus`.
std::optional<double> average_increase(const DomainReport& report, const std::string& versus) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& inc : report.increases) {
    if (inc.model_id == "*" || inc.versus != versus || !inc.percent) continue;
    sum += *inc.percent;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string increase_cell(const std::optional<double>& pct) {
  return pct ? signed_fixed(*pct, 1) : "n/a";
}

void domain_summary_table(std::string& out, const std::vector<GapSummary>& rows) {
  // Bold the largest |difference| for PMI and CPMI.
  std::array<std::size_t, 2> widest{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (std::abs(rows[i].median.pmi_diff) > std::abs(rows[widest[0]].median.pmi_diff)) widest[0] = i;
    if (std::abs(rows[i].median.cpmi_diff) > std::abs(rows[widest[1]].median.cpmi_diff)) widest[1] = i;
  }
  out += md_head({"Domain", "NLL", "PPL", "PMI (Δ)", "CPMI (Δ)", "Records"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    std::string pmi = gap_cell(s, GapMetric::kPmi);
    std::string cpmi = gap_cell(s, GapMetric::kCpmi);
    if (i == widest[0]) pmi = "**" + pmi + "**";
    if (i == widest[1]) cpmi = "**" + cpmi + "**";
    out += md_row({s.key.domain, gap_cell(s, GapMetric::kNll), gap_cell(s, GapMetric::kPpl), pmi,
                   cpmi, std::to_string(s.count)});
  }
}

}  // namespace

std::string render_domain_table(const DomainReport& report, TableFormat format,
                                const RunMetadata& metadata) {
  require_nonempty(report.pooled.empty(), "domain comparison");
  require_nonempty(report.per_model.empty(), "per-model domain detail");
  std::string out = header_block(metadata, format);
  std::vector<std::string> others;
  for (const auto& s : report.pooled)
    if (s.key.domain != report.creative_domain) others.push_back(s.key.domain);

  if (format == TableFormat::kCsv) {
    std::vector<std::string> head = {"section"};
    head.insert(head.end(), kSummaryColumns.begin(), kSummaryColumns.end());
    head.push_back("versus");
    head.push_back("relative_pmi_increase_pct");
    out += csv_row(head);
    auto emit = [&](const char* section, const std::vector<GapSummary>& rows) {
      for (const auto& s : rows) {
        std::vector<std::string> f = {section};
        auto fields = summary_fields(s);
        f.insert(f.end(), fields.begin(), fields.end());
        f.push_back("");
        f.push_back("");
        out += csv_row(f);
      }
    };
    emit("pooled", report.pooled);
    emit("median_of_medians", report.median_of_medians);
    emit("per_model", report.per_model);
    auto emit_increase = [&](const char* section, const std::string& model,
                             const std::string& versus, const std::optional<double>& pct) {
      std::vector<std::string> f(head.size());
      f[0] = section;
      f[1] = model;
      f[2] = "*";
      f[3] = report.creative_domain;
      f[head.size() - 2] = versus;
      f[head.size() - 1] = pct ? format_full(*pct) : "";
      out += csv_row(f);
    };
    for (const auto& inc : report.increases)
      if (inc.model_id != "*")
        emit_increase("relative_pmi_increase", inc.model_id, inc.versus, inc.percent);
    if (!report.increases.empty()) {
      for (const auto& d : others)
        emit_increase("relative_pmi_increase_average", "*", d, average_increase(report, d));
    }
    for (const auto& inc : report.increases)
      if (inc.model_id == "*")
        emit_increase("relative_pmi_increase_pooled", "*", inc.versus, inc.percent);
    return out;
  }

  out += "# Uncertainty gap by domain\n\n";
  out += "Pooled medians over every record in each domain. NLL and PPL are ratios "
         "(human/model); PMI and CPMI are differences (human - model). The largest absolute "
         "PMI and CPMI differences are in bold.\n\n";
  domain_summary_table(out, report.pooled);

  out += "\n## Median of per-model medians\n\n";
  domain_summary_table(out, report.median_of_medians);

  out += "\n## Per-model detail\n\n";
  std::set<std::string> models;
  std::map<std::pair<std::string, std::string>, const GapSummary*> cells;
  for (const auto& s : report.per_model) {
    models.insert(s.key.model_id);
    cells[{s.key.model_id, s.key.domain}] = &s;
  }
  std::vector<std::string> head = {"Model"};
  for (const auto& p : report.pooled)
    for (GapMetric m : kGapMetrics) head.push_back(p.key.domain + " " + metric_name(m));
  out += md_head(head);
  for (const auto& model : models) {
    std::vector<std::string> row = {model_label(model)};
    for (const auto& p : report.pooled) {
      auto it = cells.find({model, p.key.domain});
      for (GapMetric m : kGapMetrics) row.push_back(it == cells.end() ? "" : gap_cell(*it->second, m));
    }
    out += md_row(row);
  }
  std::vector<std::string> pooled_row = {"**Median (pooled)**"};
  for (const auto& p : report.pooled)
    for (GapMetric m : kGapMetrics) pooled_row.push_back(gap_cell(p, m));
  out += md_row(pooled_row);

  if (!report.increases.empty()) {
    out += "\n## Relative PMI gap increase for " + report.creative_domain + "\n\n";
    out += "Percent by which the absolute PMI difference in " + report.creative_domain +
           " exceeds that of each other domain.\n\n";
    std::vector<std::string> ihead = {"Model"};
    for (const auto& d : others) ihead.push_back("vs. " + d + " (%)");
    out += md_head(ihead);
    std::map<std::pair<std::string, std::string>, std::optional<double>> inc;
    for (const auto& i : report.increases) inc[{i.model_id, i.versus}] = i.percent;
    for (const auto& model : models) {
      std::vector<std::string> row = {model_label(model)};
      for (const auto& d : others) row.push_back(increase_cell(inc[{model, d}]));
      out += md_row(row);
    }
    std::vector<std::string> avg = {"**Average**"};
    std::vector<std::string> pooled = {"**Pooled medians**"};
    for (const auto& d : others) {
      avg.push_back(increase_cell(average_increase(report, d)));
      pooled.push_back(increase_cell(inc[{"*", d}]));
    }
    out += md_row(avg);
    out += md_row(pooled);
  }
  return out;
}

void emit_domain_table(const DomainReport& report, TableFormat format,
                       const std::filesystem::path& path, const RunMetadata& metadata) {
  write_text_atomic(path, render_domain_table(report, format, metadata));
}

namespace {

std::string opt_full(const std::optional<double>& v) { return v ? format_full(*v) : ""; }

std::vector<std::string> rollup_fields(const RollupRow& r) {
  return {role_name(r.role),
          metric_name(r.metric),
          std::to_string(r.groups),
          format_full(r.mean_rho),
          format_full(r.sd_rho),
          format_full(r.pct_significant_expected),
          format_full(r.pct_significant_positive),
          format_full(r.pct_significant_negative),
          format_full(r.pct_sweet_spot),
          format_full(r.pct_linear),
          format_full(r.pct_diminishing),
          opt_full(r.mean_z_star),
          format_full(r.mean_delta_r2),
          format_full(r.mean_beta1),
          format_full(r.mean_beta2)};
}

const std::vector<std::string> kRollupColumns = {
    "role",          "metric",         "groups",         "mean_rho",        "sd_rho",
    "pct_sig_expected", "pct_sig_positive", "pct_sig_negative", "pct_sweet_spot", "pct_linear",
    "pct_diminishing", "mean_z_star",   "mean_delta_r2",  "mean_beta1",      "mean_beta2"};

}  // namespace

std::string render_quality_rollup(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata) {
  require_nonempty(summary.rollup.empty(), "quality roll-up");
  std::string out = header_block(metadata, format);
  if (format == TableFormat::kCsv) {
    out += csv_row(kRollupColumns);
    for (const auto& r : summary.rollup) out += csv_row(rollup_fields(r));
    return out;
  }
  out += "# Uncertainty and writing quality\n\n";
  out += "rho: mean Spearman correlation +/- sd across model-dataset groups. Sig.: share of "
         "groups significant in the expected direction (positive for NLL and PPL, negative for "
         "PMI; one-sided p < 0.05). Sweet Spot: share with a significant inverted-U whose peak "
         "lies within the range limit.\n\n";
  out += md_head({"Source", "Metric", "Groups", "rho", "Sig.", "Sweet Spot", "mean z*", "mean ΔR²"}, 2);
  for (const auto& r : summary.rollup) {
    if (r.groups == 0) {
      out += md_row({role_label(r.role), metric_name(r.metric), "0", "--", "--", "--", "--", "--"});
      continue;
    }
    out += md_row({role_label(r.role), metric_name(r.metric), std::to_string(r.groups),
                   signed_fixed(r.mean_rho, 3) + " ± " + format_fixed(r.sd_rho, 3),
                   percent_cell(r.pct_significant_expected), percent_cell(r.pct_sweet_spot),
                   r.mean_z_star ? format_fixed(*r.mean_z_star) : "--",
                   format_fixed(r.mean_delta_r2, 4)});
  }
  return out;
}

std::string render_quality_detail(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata) {
  require_nonempty(summary.detail.empty(), "quality detail");
  std::string out = header_block(metadata, format);
  if (format == TableFormat::kCsv) {
    std::vector<std::string> head = {"dataset"};
    head.insert(head.end(), kRollupColumns.begin(), kRollupColumns.end());
    out += csv_row(head);
    for (const auto& r : summary.detail) {
      std::vector<std::string> f = {r.dataset};
      auto rest = rollup_fields(r);
      f.insert(f.end(), rest.begin(), rest.end());
      out += csv_row(f);
    }
    return out;
  }
  out += "# Uncertainty and writing quality by dataset\n\n";
  out += "Sig.+ and Sig.-: share of groups with a significant positive or negative correlation "
         "(one-sided p < 0.05). Coefficients are on standardized uncertainty and averaged "
         "across groups; mean z* is over sweet-spot groups only.\n\n";
  out += md_head({"Dataset", "Source", "Metric", "n", "mean rho", "sd rho", "Sig.+", "Sig.-",
                  "Sweet", "mean z*", "ΔR²", "mean β1", "mean β2", "Linear", "Diminishing"},
                 3);
  std::string last;
  for (const auto& r : summary.detail) {
    const std::string ds = r.dataset == last ? "" : r.dataset;
    last = r.dataset;
    if (r.groups == 0) {
      std::vector<std::string> row = {ds, role_label(r.role), metric_name(r.metric), "0"};
      row.resize(15, "--");
      out += md_row(row);
      continue;
    }
    out += md_row({ds, role_label(r.role), metric_name(r.metric), std::to_string(r.groups),
                   format_fixed(r.mean_rho, 3), format_fixed(r.sd_rho, 3),
                   percent_cell(r.pct_significant_positive),
                   percent_cell(r.pct_significant_negative), percent_cell(r.pct_sweet_spot),
                   r.mean_z_star ? format_fixed(*r.mean_z_star) : "--",
                   format_fixed(r.mean_delta_r2, 4), format_fixed(r.mean_beta1, 3),
                   format_fixed(r.mean_beta2, 4), percent_cell(r.pct_linear),
                   percent_cell(r.pct_diminishing)});
  }
  return out;
}

std::string render_quality_per_model(const QualitySummary& summary, TableFormat format,
                                     const RunMetadata& metadata) {
  require_nonempty(summary.rows.empty(), "per-model correlations");
  std::string out = header_block(metadata, format);
  if (format == TableFormat::kCsv) {
    out += csv_row({"model_id", "dataset", "role", "metric", "n", "rho", "p", "stars", "beta0",
                    "beta1", "beta2", "se1", "se2", "p1", "p2", "r2_lin", "r2_quad", "delta_r2",
                    "z_star", "raw_beta0", "raw_beta1", "raw_beta2", "raw_peak", "shape",
                    "diagnostic"});
    for (const auto& row : summary.rows) {
      std::vector<std::string> f = {row.model_id, row.dataset, role_name(row.role),
                                    metric_name(row.metric), std::to_string(row.n)};
      if (row.analysed()) {
        const auto& c = *row.correlation;
        const auto& g = *row.regression;
        for (const auto& v : {format_full(c.rho), format_full(c.p), significance_stars(c.p),
                              format_full(g.beta0), format_full(g.beta1), format_full(g.beta2),
                              format_full(g.se1), format_full(g.se2), format_full(g.p1),
                              format_full(g.p2), format_full(g.r2_lin), format_full(g.r2_quad),
                              format_full(g.delta_r2), opt_full(g.z_star),
                              format_full(g.raw_coefficients[0]),
                              format_full(g.raw_coefficients[1]),
                              format_full(g.raw_coefficients[2]), opt_full(g.raw_peak)})
          f.push_back(v);
      } else {
        f.resize(f.size() + 18);
      }
      f.push_back(shape_name(row.shape));
      f.push_back(row.diagnostic);
      out += csv_row(f);
    }
    return out;
  }

  out += "# Per-model Spearman correlations with writing quality\n\n";
  out += "Significance: *** p < 0.001, ** p < 0.01, * p < 0.05 (two-sided). -- marks a missing "
         "group; n/a marks a group that could not be analysed (see diagnostics.json).\n";
  std::set<std::string> models;
  std::set<std::pair<std::string, int>> columns;  // dataset, role
  std::map<std::tuple<std::string, std::string, int, int>, const CorrelationRow*> cells;
  for (const auto& row : summary.rows) {
    models.insert(row.model_id);
    columns.insert({row.dataset, static_cast<int>(row.role)});
    cells[{row.model_id, row.dataset, static_cast<int>(row.role), static_cast<int>(row.metric)}] =
        &row;
  }
  for (UncertaintyMetric metric : kUncertaintyMetrics) {
    out += std::string("\n## ") + metric_name(metric) + "\n\n";
    std::vector<std::string> head = {"Model"};
    for (const auto& [ds, role] : columns) head.push_back(ds + " " + role_label(static_cast<Role>(role)));
    out += md_head(head);
    for (const auto& model : models) {
      std::vector<std::string> row = {model};
      for (const auto& [ds, role] : columns) {
        auto it = cells.find({model, ds, role, static_cast<int>(metric)});
        if (it == cells.end()) {
          row.push_back("--");
        } else if (!it->second->analysed()) {
          row.push_back("n/a");
        } else {
          const auto& c = *it->second->correlation;
          row.push_back(format_fixed(c.rho, 3) + significance_stars(c.p));
        }
      }
      out += md_row(row);
    }
  }
  return out;
}

std::string render_quality_shapes(const QualitySummary& summary, TableFormat format,
                                  const RunMetadata& metadata) {
  require_nonempty(summary.shapes.empty(), "shape distribution");
  std::string out = header_block(metadata, format);
  if (format == TableFormat::kCsv) {
    std::vector<std::string> head = {"role", "metric"};
    for (ShapeClass s : kShapeClasses) head.push_back(shape_name(s));
    head.push_back("total");
    out += csv_row(head);
    for (const auto& c : summary.shapes) {
      std::vector<std::string> f = {role_name(c.role), metric_name(c.metric)};
      for (auto n : c.counts) f.push_back(std::to_string(n));
      f.push_back(std::to_string(c.total()));
      out += csv_row(f);
    }
    return out;
  }
  out += "# Shape of the uncertainty-quality relationship\n\n";
  out += "Counts of model-dataset groups per shape class. Groups that could not be analysed "
         "count as Flat/NS.\n\n";
  out += md_head({"Source", "Metric", "Linear", "Sweet Spot", "Diminishing", "U-Shape", "Flat/NS",
                  "Total"},
                 2);
  for (const auto& c : summary.shapes) {
    std::vector<std::string> row = {role_label(c.role), metric_name(c.metric)};
    for (auto n : c.counts) row.push_back(std::to_string(n));
    row.push_back(std::to_string(c.total()));
    out += md_row(row);
  }
  return out;
}

void emit_quality_tables(const QualitySummary& summary, const std::filesystem::path& dir,
                         const RunMetadata& metadata) {
  using Render = std::string (*)(const QualitySummary&, TableFormat, const RunMetadata&);
  const std::vector<std::pair<const char*, Render>> tables = {
      {"quality_rollup", render_quality_rollup},
      {"quality_detail", render_quality_detail},
      {"quality_per_model", render_quality_per_model},
      {"quality_shapes", render_quality_shapes}};
  // Render everything first so a failure leaves no partial set behind.
  std::vector<std::pair<std::filesystem::path, std::string>> files;
  for (const auto& [name, render] : tables) {
    for (TableFormat f : {TableFormat::kCsv, TableFormat::kMarkdown}) {
      files.emplace_back(dir / (std::string(name) + "." + format_extension(f)),
                         render(summary, f, metadata));
    }
  }
  for (const auto& [path, text] : files) write_text_atomic(path, text);
}

}  // namespace ugap
