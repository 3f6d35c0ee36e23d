// Command-line front end: ingest -> score -> quality -> analyze -> correlate.
//
// Exit codes: 0 success, 1 some pairs failed, 2 configuration or input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "ugap/errors.hpp"
#include "ugap/pipeline.hpp"

namespace {

constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

void write_effective_config(const CLI::App& app, const ugap::RunConfig& config) {
  std::filesystem::create_directories(config.out);
  std::ofstream out(std::filesystem::path(config.out) / "config.ini");
  out << "; effective configuration (defaults, config file and flags merged)\n"
      << app.config_to_str(true, false);
}

}  // namespace

int main(int argc, char** argv) {
  ugap::RunConfig config;
  double timeout_s = 120.0;
  std::string boundary = "text-offset";
  std::uint64_t seed = 0;

  CLI::App app{"Measure the human-model uncertainty gap of story continuations."};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value config file; flags override it");

  app.add_option("--corpus", config.corpus, "Corpus JSONL file(s); dataset label = file stem");
  app.add_option("--domain", config.domains, "Domain label for all corpora, or one per corpus")
      ->capture_default_str();
  app.add_option("--creative-domain", config.creative_domain,
                 "Domain compared against the others in the relative PMI table")
      ->capture_default_str();
  app.add_option("--backend-url", config.backend.base_url, "Completions API root, e.g. http://host:8000/v1");
  app.add_option("--model", config.backend.model, "Model name sent to the endpoint");
  app.add_option("--api-key-env", config.backend.api_key_env,
                 "Environment variable holding the API key");
  app.add_option("--scoring-boundary", boundary,
                 "How continuation tokens are located: text-offset or token-count")
      ->check(CLI::IsMember({"text-offset", "token-count"}))
      ->capture_default_str();
  app.add_option("--unconditional-prefix", config.backend.unconditional_prefix,
                 "Text prepended to unconditional prompts (e.g. a BOS string)");
  app.add_option("--timeout", timeout_s, "Per-request timeout in seconds")->capture_default_str();
  app.add_flag("--mock", config.mock, "Use the built-in unigram mock model and mock scorer");
  app.add_option("--mock-context-weight", config.mock_context_weight,
                 "Weight of the mock's in-context cache (0 = context independent)")
      ->capture_default_str();
  app.add_option("--temperature", config.sampling.temperature)->capture_default_str();
  app.add_option("--top-p", config.sampling.top_p)->capture_default_str();
  app.add_option("--max-tokens", config.sampling.max_tokens, "Cap on generated tokens per pair")
      ->capture_default_str();
  app.add_option("--tau", config.tau, "CPMI surprisal threshold in nats")->capture_default_str();
  app.add_option("--lambda", config.lambda, "CPMI unconditional weight")->capture_default_str();
  app.add_option("--max-token-filter", config.max_token_filter,
                 "Drop stories longer than this many tokens")
      ->capture_default_str();
  app.add_option("--top-k", config.backend.top_k, "Alternatives requested per position")
      ->capture_default_str();
  app.add_option("--seed", seed, "Run seed; per-pair seeds derive from it")->capture_default_str();
  app.add_option("--parallelism", config.parallelism, "Concurrent pairs while scoring")
      ->capture_default_str();
  app.add_option("--out", config.out, "Output directory")->capture_default_str();
  app.add_option("--scorer-url", config.scorer_url, "Quality scorer endpoint");
  app.add_option("--scorer-api-key-env", config.scorer_api_key_env,
                 "Environment variable holding the scorer API key");
  app.add_option("--min-group-n", config.correlate.min_n,
                 "Smallest group analysed by correlate")
      ->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Segment corpora into context/continuation pairs");
  auto* score = app.add_subcommand("score", "Score every pair (resumable)");
  auto* quality = app.add_subcommand("quality", "Score passage quality for human and model text");
  auto* analyze = app.add_subcommand("analyze", "Write the gap and domain reports");
  auto* correlate = app.add_subcommand("correlate", "Write the quality correlation reports");
  auto* run = app.add_subcommand("run", "All stages in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    config.seed = seed;
    config.backend.timeout =
        std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    config.backend.boundary = boundary == "token-count" ? ugap::ScoringBoundary::kTokenCount
                                                        : ugap::ScoringBoundary::kTextOffset;
    config.backend.max_parallel_requests = config.parallelism;
    config.validate();
    write_effective_config(app, config);

    ugap::StageOutcome outcome;
    if (ingest->parsed()) outcome = ugap::cmd_ingest(config, std::cerr);
    if (score->parsed()) outcome = ugap::cmd_score(config, std::cerr);
    if (quality->parsed()) outcome = ugap::cmd_quality(config, std::cerr);
    if (analyze->parsed()) outcome = ugap::cmd_analyze(config, std::cerr);
    if (correlate->parsed()) outcome = ugap::cmd_correlate(config, std::cerr);
    if (run->parsed()) outcome = ugap::run_all(config, std::cerr);
    return outcome.failed == 0 ? 0 : kExitPartial;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
