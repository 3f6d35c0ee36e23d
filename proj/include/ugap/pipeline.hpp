#pragma once

// Pipeline stages over the JSONL contracts in the output directory:
//   ingest    corpora       -> pairs.jsonl
//   score     pairs.jsonl   -> records.jsonl, traces.jsonl
//   quality   pairs+records -> scores.jsonl
//   analyze   records.jsonl -> reports/gap.*, reports/domain.*
//   correlate records+scores -> reports/quality_*

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ugap/backend.hpp"
#include "ugap/http_backend.hpp"
#include "ugap/metrics.hpp"
#include "ugap/quality.hpp"
#include "ugap/report.hpp"

namespace ugap {

inline constexpr const char* kToolVersion = "ugap 0.1.0";

struct RunConfig {
  std::vector<std::string> corpus;
  /// One label for every corpus, or one per corpus.
  std::vector<std::string> domains = {"creative"};
  std::string creative_domain = "creative";

  BackendConfig backend;
  bool mock = false;
  double mock_context_weight = 0.0;

  SamplingConfig sampling;
  double tau = kDefaultTau;
  double lambda = kDefaultLambda;
  std::size_t max_token_filter = 4096;
  std::uint64_t seed = 0;
  std::size_t parallelism = 8;
  std::string out = "out";

  std::string scorer_url;  // empty: mock scorer when mock, otherwise no quality stage
  std::string scorer_api_key_env;
  CorrelateOptions correlate;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;

  std::filesystem::path pairs_path() const { return std::filesystem::path(out) / "pairs.jsonl"; }
  std::filesystem::path records_path() const { return std::filesystem::path(out) / "records.jsonl"; }
  std::filesystem::path traces_path() const { return std::filesystem::path(out) / "traces.jsonl"; }
  std::filesystem::path scores_path() const { return std::filesystem::path(out) / "scores.jsonl"; }
  std::filesystem::path reports_dir() const { return std::filesystem::path(out) / "reports"; }
};

struct StageOutcome {
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // already done (resume) or filtered

  int exit_code() const { return failed == 0 ? 0 : 1; }
};

/// Mock over the unigram distribution of the words in `pairs`; the fixed
/// four-token fixture when `pairs` is empty.
std::shared_ptr<Backend> make_mock_backend(const RunConfig& config,
                                           const std::vector<SegmentPair>& pairs);

/// HttpBackend, or the mock when `config.mock` is set.
std::shared_ptr<Backend> make_backend(const RunConfig& config,
                                      const std::vector<SegmentPair>& pairs = {});

/// Null when neither a scorer URL nor the mock is configured.
std::unique_ptr<QualityScorer> make_scorer(const RunConfig& config);

/// `counter` supplies token counts; null picks one from the config.
StageOutcome cmd_ingest(const RunConfig& config, std::ostream& log,
                        std::shared_ptr<Backend> counter = nullptr);

/// Per-pair failures are logged and counted; already-scored keys are skipped.
StageOutcome cmd_score(const RunConfig& config, std::ostream& log,
                       std::shared_ptr<Backend> backend = nullptr);

StageOutcome cmd_quality(const RunConfig& config, std::ostream& log,
                         QualityScorer* scorer = nullptr);

StageOutcome cmd_analyze(const RunConfig& config, std::ostream& log);

StageOutcome cmd_correlate(const RunConfig& config, std::ostream& log);

/// Every stage in order; quality and correlate are skipped without a scorer.
StageOutcome run_all(const RunConfig& config, std::ostream& log);

/// Provenance written atop every report file.
RunMetadata run_metadata(const RunConfig& config, const std::string& stage,
                         const std::vector<std::filesystem::path>& inputs,
                         const std::vector<std::string>& model_ids);

/// Hex FNV-1a of a file's bytes.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace ugap
