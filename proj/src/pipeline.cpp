#include "ugap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "ugap/corpus.hpp"
#include "ugap/errors.hpp"
#include "ugap/gap.hpp"
#include "ugap/mock_backend.hpp"
#include "ugap/records.hpp"

namespace ugap {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (domains.empty()) throw ConfigError("at least one domain label is required");
  if (domains.size() != 1 && domains.size() != corpus.size()) {
    throw ConfigError("give one --domain for all corpora or one per corpus (" +
                      std::to_string(corpus.size()) + " corpora, " +
                      std::to_string(domains.size()) + " domains)");
  }
  sampling.validate();
  if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (max_token_filter == 0) throw ConfigError("max token filter must be positive");
  if (parallelism == 0) throw ConfigError("parallelism must be >= 1");
  if (backend.top_k == 0) throw ConfigError("top_k must be >= 1");
  if (!(mock_context_weight >= 0.0 && mock_context_weight < 1.0)) {
    throw ConfigError("mock context weight must lie in [0, 1)");
  }
  if (out.empty()) throw ConfigError("output directory is empty");
  if (!mock) backend.validate();
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(buffer.str())));
  return hex;
}

RunMetadata run_metadata(const RunConfig& config, const std::string& stage,
                         const std::vector<fs::path>& inputs,
                         const std::vector<std::string>& model_ids) {
  RunMetadata meta;
  meta.emplace_back("tool", kToolVersion);
  meta.emplace_back("stage", stage);
  std::string models;
  for (const auto& m : model_ids) models += (models.empty() ? "" : ", ") + m;
  meta.emplace_back("models", models);
  std::ostringstream sampling;
  sampling << "temperature=" << format_full(config.sampling.temperature)
           << " top_p=" << format_full(config.sampling.top_p)
           << " max_tokens=" << config.sampling.max_tokens;
  meta.emplace_back("sampling", sampling.str());
  meta.emplace_back("tau", format_full(config.tau));
  meta.emplace_back("lambda", format_full(config.lambda));
  meta.emplace_back("top_k", std::to_string(config.backend.top_k));
  meta.emplace_back("seed", std::to_string(config.seed));
  meta.emplace_back("max_token_filter", std::to_string(config.max_token_filter));
  for (const auto& c : config.corpus) {
    const fs::path p(c);
    meta.emplace_back("corpus", p.filename().string() + " fnv1a64=" +
                                    (fs::exists(p) ? file_checksum(p) : std::string("missing")));
  }
  for (const auto& p : inputs) {
    meta.emplace_back("input", p.filename().string() + " fnv1a64=" + file_checksum(p));
  }
  return meta;
}

std::shared_ptr<Backend> make_mock_backend(const RunConfig& config,
                                           const std::vector<SegmentPair>& pairs) {
  MockOptions options;
  options.top_k = config.backend.top_k;
  options.context_weight = config.mock_context_weight;
  if (pairs.empty()) return std::make_shared<MockBackend>(MockBackend::fixture(options));

  std::map<std::string, std::size_t> counts;
  std::set<std::string> seen_stories;
  for (const auto& p : pairs) {
    // Each story's text is covered by its first context plus every continuation.
    if (seen_stories.insert(p.story_id).second) {
      for (auto& w : split_whitespace(p.context)) ++counts[w];
    }
    for (auto& w : split_whitespace(p.continuation)) ++counts[w];
  }
  std::size_t total = 0;
  for (const auto& [w, n] : counts) total += n;
  std::vector<std::string> vocab;
  std::vector<double> probs;
  for (const auto& [w, n] : counts) {
    vocab.push_back(w);
    probs.push_back(static_cast<double>(n) / static_cast<double>(total));
  }
  return std::make_shared<MockBackend>(std::move(vocab), std::move(probs), options);
}

std::shared_ptr<Backend> make_backend(const RunConfig& config,
                                      const std::vector<SegmentPair>& pairs) {
  if (config.mock) return make_mock_backend(config, pairs);
  return std::make_shared<HttpBackend>(config.backend);
}

std::unique_ptr<QualityScorer> make_scorer(const RunConfig& config) {
  if (!config.scorer_url.empty()) {
    return std::make_unique<HttpQualityScorer>(config.scorer_url, config.scorer_api_key_env);
  }
  if (config.mock) return std::make_unique<MockQualityScorer>();
  return nullptr;
}

namespace {

using PairKey = std::tuple<std::string, std::size_t, std::string>;  // story, k, model

std::string dataset_label(const std::string& path) { return fs::path(path).stem().string(); }

std::vector<std::string> model_ids_of(const std::vector<PairedRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.model_id);
  return {ids.begin(), ids.end()};
}

/// Merges one stage's section into reports/diagnostics.json.
void write_diagnostics(const RunConfig& config, const std::string& stage, Json section) {
  const fs::path path = config.reports_dir() / "diagnostics.json";
  Json all = Json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      all = Json::parse(in);
    } catch (const Json::parse_error&) {
      all = Json::object();
    }
    if (!all.is_object()) all = Json::object();
  }
  all[stage] = std::move(section);
  write_text_atomic(path, all.dump(2) + "\n");
}

Json metadata_json(const RunMetadata& meta) {
  Json j = Json::array();
  for (const auto& [k, v] : meta) j.push_back({k, v});
  return j;
}

void sort_records(std::vector<PairedRecord>& records) {
  std::sort(records.begin(), records.end(), [](const PairedRecord& a, const PairedRecord& b) {
    return std::tie(a.model_id, a.dataset, a.story_id, a.k) <
           std::tie(b.model_id, b.dataset, b.story_id, b.k);
  });
}

}  // namespace

StageOutcome cmd_ingest(const RunConfig& config, std::ostream& log,
                        std::shared_ptr<Backend> counter) {
  config.validate();
  if (config.corpus.empty()) throw ConfigError("no corpus given");
  if (!counter) counter = make_backend(config);
  const TokenCounter count = [&](std::string_view text) { return counter->count_tokens(text); };

  StageOutcome outcome;
  std::vector<Json> lines;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < config.corpus.size(); ++i) {
    const std::string& path = config.corpus[i];
    const std::string& domain = config.domains.size() == 1 ? config.domains[0] : config.domains[i];
    std::vector<Story> stories;
    try {
      stories = load_corpus(path, domain);
    } catch (const InputError& e) {
      throw InputError(path + ": " + e.what());
    }
    for (const auto& s : stories) {
      if (!ids.insert(s.id).second) throw InputError(path + ": duplicate story id: " + s.id);
    }
    FilterResult kept = filter_by_length(stories, config.max_token_filter, count);
    std::size_t pairs = 0;
    std::size_t short_stories = 0;
    const std::string dataset = dataset_label(path);
    for (const auto& story : kept.kept) {
      auto built = build_pairs(story, segment_sentences(story.text), dataset, count);
      if (built.empty()) ++short_stories;
      for (const auto& p : built) lines.push_back(to_json(p));
      pairs += built.size();
    }
    log << "ingest " << dataset << ": " << stories.size() << " stories, " << kept.removed
        << " over " << config.max_token_filter << " tokens removed, " << short_stories
        << " with fewer than two sentences, " << pairs << " pairs\n";
    outcome.succeeded += pairs;
    outcome.skipped += kept.removed;
  }
  write_jsonl(config.pairs_path(), lines);
  return outcome;
}

StageOutcome cmd_score(const RunConfig& config, std::ostream& log,
                       std::shared_ptr<Backend> backend) {
  config.validate();
  if (!fs::exists(config.pairs_path())) {
    throw InputError("missing " + config.pairs_path().string() + "; run ingest first");
  }
  const std::vector<SegmentPair> pairs = read_pairs(config.pairs_path());
  if (!backend) backend = make_backend(config, pairs);
  const std::string model = backend->model_id();

  // Resume: keep complete records, drop a torn tail and orphaned traces.
  std::vector<PairedRecord> records;
  if (fs::exists(config.records_path())) records = read_records(config.records_path(), true);
  std::set<PairKey> done;
  {
    std::vector<PairedRecord> unique;
    for (auto& r : records) {
      if (done.insert({r.story_id, r.k, r.model_id}).second) unique.push_back(std::move(r));
    }
    records = std::move(unique);
  }
  std::vector<TraceLine> traces;
  if (fs::exists(config.traces_path())) {
    std::set<std::tuple<std::string, std::size_t, std::string, int, std::string>> seen;
    read_jsonl(
        config.traces_path(),
        [&](const Json& j, std::size_t) {
          TraceLine t = trace_line_from_json(j);
          if (!done.count({t.story_id, t.k, t.model})) return;
          if (!seen.insert({t.story_id, t.k, t.model, static_cast<int>(t.role), t.pass}).second) return;
          traces.push_back(std::move(t));
        },
        true);
  }
  {
    std::vector<Json> rl, tl;
    for (const auto& r : records) rl.push_back(to_json(r));
    for (const auto& t : traces) tl.push_back(to_json(t));
    write_jsonl(config.records_path(), rl);
    write_jsonl(config.traces_path(), tl);
  }

  std::vector<const SegmentPair*> todo;
  StageOutcome outcome;
  for (const auto& p : pairs) {
    if (done.count({p.story_id, p.k, model})) {
      ++outcome.skipped;
    } else {
      todo.push_back(&p);
    }
  }
  log << "score " << model << ": " << pairs.size() << " pairs, " << outcome.skipped
      << " already scored, " << todo.size() << " to go\n";

  EvaluationSettings settings;
  settings.sampling = config.sampling;
  settings.seed = config.seed;
  settings.tau = config.tau;
  settings.lambda = config.lambda;

  std::ofstream records_out(config.records_path(), std::ios::app | std::ios::binary);
  std::ofstream traces_out(config.traces_path(), std::ios::app | std::ios::binary);
  if (!records_out || !traces_out) throw InputError("cannot append to " + config.out);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        PairEvaluation ev = evaluate_pair_traced(*todo[i], *backend, settings);
        std::string rec_line = to_json(ev.record).dump() + "\n";
        std::string trace_text;
        for (const auto& t : trace_lines(ev, config.sampling)) trace_text += to_json(t).dump() + "\n";
        std::lock_guard lock(mu);
        // Traces first: a record is only trusted once its traces are on disk.
        traces_out << trace_text << std::flush;
        records_out << rec_line << std::flush;
        ++succeeded;
      } catch (const PairError& e) {
        std::lock_guard lock(mu);
        log << "score failed: " << e.what() << (e.retryable() ? " (retryable)" : "") << "\n";
        ++failed;
      }
    }
  };
  const std::size_t threads = std::min(config.parallelism, std::max<std::size_t>(todo.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  records_out.close();
  traces_out.close();

  // Canonical order so reruns at any parallelism produce identical files.
  records = read_records(config.records_path());
  sort_records(records);
  traces.clear();
  read_jsonl(config.traces_path(),
             [&](const Json& j, std::size_t) { traces.push_back(trace_line_from_json(j)); });
  std::sort(traces.begin(), traces.end(), [](const TraceLine& a, const TraceLine& b) {
    return std::make_tuple(a.model, a.story_id, a.k, static_cast<int>(a.role), a.pass) <
           std::make_tuple(b.model, b.story_id, b.k, static_cast<int>(b.role), b.pass);
  });
  std::vector<Json> rl, tl;
  for (const auto& r : records) rl.push_back(to_json(r));
  for (const auto& t : traces) tl.push_back(to_json(t));
  write_jsonl(config.records_path(), rl);
  write_jsonl(config.traces_path(), tl);

  outcome.succeeded = succeeded;
  outcome.failed = failed;
  log << "score " << model << ": " << succeeded << " scored, " << failed << " failed\n";
  return outcome;
}

StageOutcome cmd_quality(const RunConfig& config, std::ostream& log, QualityScorer* scorer) {
  config.validate();
  std::unique_ptr<QualityScorer> owned;
  if (!scorer) {
    owned = make_scorer(config);
    if (!owned) throw ConfigError("no quality scorer configured (set a scorer URL or use --mock)");
    scorer = owned.get();
  }
  const auto pairs = read_pairs(config.pairs_path());
  const auto records = read_records(config.records_path());
  std::map<std::pair<std::string, std::size_t>, const SegmentPair*> by_key;
  for (const auto& p : pairs) by_key[{p.story_id, p.k}] = &p;

  StageOutcome outcome;
  std::vector<QualityScore> scores;
  auto attempt = [&](auto&& fn) {
    try {
      QualityScore s = fn();
      if (s.excluded) {
        ++outcome.skipped;
      } else {
        ++outcome.succeeded;
      }
      scores.push_back(std::move(s));
    } catch (const PairError& e) {
      log << "quality failed: " << e.what() << "\n";
      ++outcome.failed;
    }
  };
  for (const auto& p : pairs) {
    attempt([&] {
      return score_quality(p.story_id, p.k, Role::kHuman, p.context, p.continuation, *scorer);
    });
  }
  for (const auto& r : records) {
    auto it = by_key.find({r.story_id, r.k});
    if (it == by_key.end()) {
      log << "quality: record (" << r.story_id << ", " << r.k << ") has no pair; skipped\n";
      ++outcome.failed;
      continue;
    }
    attempt([&] {
      QualityScore s =
          score_quality(r.story_id, r.k, Role::kModel, it->second->context, r.model_text, *scorer);
      s.model_id = r.model_id;
      return s;
    });
  }
  std::sort(scores.begin(), scores.end(), [](const QualityScore& a, const QualityScore& b) {
    return std::make_tuple(static_cast<int>(a.role), a.model_id, a.story_id, a.k) <
           std::make_tuple(static_cast<int>(b.role), b.model_id, b.story_id, b.k);
  });
  std::vector<Json> lines;
  for (const auto& s : scores) lines.push_back(to_json(s));
  write_jsonl(config.scores_path(), lines);
  log << "quality: " << outcome.succeeded << " scored, " << outcome.skipped
      << " outside the " << kMinQualityWords << "-" << kMaxQualityWords << " word window, "
      << outcome.failed << " failed\n";
  return outcome;
}

StageOutcome cmd_analyze(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto records = read_records(config.records_path());
  if (records.empty()) throw InputError(config.records_path().string() + " has no records");
  const auto models = model_ids_of(records);
  const RunMetadata meta = run_metadata(config, "analyze", {config.records_path()}, models);
  const fs::path dir = config.reports_dir();

  auto gap = aggregate_median(records, GroupBy{true, true, false});
  bucketize(gap);
  for (TableFormat f : {TableFormat::kCsv, TableFormat::kMarkdown}) {
    emit_gap_table(gap, f, dir / (std::string("gap.") + format_extension(f)), meta);
  }

  Json diag = Json::object();
  diag["metadata"] = metadata_json(meta);
  diag["records"] = records.size();
  std::size_t truncated = 0;
  for (const auto& r : records) truncated += r.truncated ? 1 : 0;
  diag["truncated_generations"] = truncated;
  Json groups = Json::array();
  for (const auto& s : gap) {
    groups.push_back({{"model_id", s.key.model_id},
                      {"dataset", s.key.dataset},
                      {"count", s.count},
                      {"excluded", s.excluded},
                      {"mismatched", s.mismatched},
                      {"mismatch_rate", s.mismatch_rate()}});
  }
  diag["gap_groups"] = groups;

  std::set<std::string> domains;
  for (const auto& r : records) domains.insert(r.domain);
  Json domain_notes = Json::array();
  if (domains.size() < 2) {
    const std::string note = "domain report skipped: records span " +
                             std::to_string(domains.size()) + " domain(s)";
    domain_notes.push_back(note);
    log << "analyze: " << note << "\n";
    for (TableFormat f : {TableFormat::kCsv, TableFormat::kMarkdown}) {
      fs::remove(dir / (std::string("domain.") + format_extension(f)));
    }
  } else {
    DomainReport report = build_domain_report(records, config.creative_domain);
    for (TableFormat f : {TableFormat::kCsv, TableFormat::kMarkdown}) {
      emit_domain_table(report, f, dir / (std::string("domain.") + format_extension(f)), meta);
    }
    for (const auto& d : report.diagnostics) domain_notes.push_back(d);
  }
  diag["domain"] = domain_notes;
  write_diagnostics(config, "analyze", std::move(diag));

  log << "analyze: " << records.size() << " records, " << gap.size() << " gap groups\n";
  StageOutcome outcome;
  outcome.succeeded = gap.size();
  return outcome;
}

StageOutcome cmd_correlate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const auto records = read_records(config.records_path());
  std::vector<QualityScore> scores;
  read_jsonl(config.scores_path(),
             [&](const Json& j, std::size_t) { scores.push_back(score_from_json(j)); });
  JoinResult joined = join_observations(records, scores);
  if (joined.observations.empty()) {
    throw InputError("no quality score matched a record (" + std::to_string(scores.size()) +
                     " scores, " + std::to_string(joined.excluded_scores) +
                     " outside the word window)");
  }
  const QualitySummary summary = correlate(joined.observations, config.correlate);
  const RunMetadata meta = run_metadata(
      config, "correlate", {config.records_path(), config.scores_path()}, model_ids_of(records));
  emit_quality_tables(summary, config.reports_dir(), meta);

  Json diag = Json::object();
  diag["metadata"] = metadata_json(meta);
  diag["observations"] = joined.observations.size();
  diag["unmatched_scores"] = joined.unmatched_scores;
  diag["excluded_scores"] = joined.excluded_scores;
  diag["skipped_groups"] = summary.diagnostics;
  write_diagnostics(config, "correlate", std::move(diag));

  std::size_t analysed = 0;
  for (const auto& row : summary.rows) analysed += row.analysed() ? 1 : 0;
  log << "correlate: " << joined.observations.size() << " observations, " << analysed << " of "
      << summary.rows.size() << " groups analysed\n";
  StageOutcome outcome;
  outcome.succeeded = analysed;
  outcome.skipped = summary.rows.size() - analysed;
  return outcome;
}

StageOutcome run_all(const RunConfig& config, std::ostream& log) {
  StageOutcome total;
  auto add = [&](const StageOutcome& o) {
    total.succeeded += o.succeeded;
    total.failed += o.failed;
    total.skipped += o.skipped;
  };
  add(cmd_ingest(config, log));
  add(cmd_score(config, log));
  add(cmd_analyze(config, log));
  if (auto scorer = make_scorer(config)) {
    add(cmd_quality(config, log, scorer.get()));
    add(cmd_correlate(config, log));
  } else {
    log << "quality and correlate skipped: no scorer configured\n";
  }
  return total;
}

}  // namespace ugap
