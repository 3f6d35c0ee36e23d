#pragma once

// JSONL contracts between pipeline stages: segment pairs, paired records,
// token traces, and quality scores.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugap/backend.hpp"
#include "ugap/corpus.hpp"
#include "ugap/gap.hpp"
#include "ugap/quality.hpp"

namespace ugap {

using Json = nlohmann::json;

/// Calls `fn(record, line_no)` for every non-blank line. With
/// `tolerate_torn_tail`, an unparsable final line lacking a newline (an
/// interrupted append) is skipped instead of raising.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const Json&, std::size_t)>& fn,
                bool tolerate_torn_tail = false);

/// Writes through a temporary file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& lines);

Json to_json(const SegmentPair& pair);
SegmentPair pair_from_json(const Json& j);
std::vector<SegmentPair> read_pairs(const std::filesystem::path& path);

/// Flattened: human_nll, human_ppl, ..., model_cpmi, model_n_tokens.
Json to_json(const PairedRecord& record);
PairedRecord record_from_json(const Json& j);
std::vector<PairedRecord> read_records(const std::filesystem::path& path,
                                       bool tolerate_torn_tail = false);

Json to_json(const SamplingConfig& sampling);

/// One persisted inference pass.
struct TraceLine {
  std::string story_id;
  std::size_t k = 0;
  Role role = Role::kHuman;
  std::string pass;  // "conditional" | "unconditional"
  TokenTrace trace;
  bool truncated = false;
  std::string model;
  Json sampling = Json::object();
};
Json to_json(const TraceLine& line);
TraceLine trace_line_from_json(const Json& j);

/// The four trace lines of one evaluated pair.
std::vector<TraceLine> trace_lines(const PairEvaluation& ev, const SamplingConfig& sampling);

/// `model_id` is written only when set.
Json to_json(const QualityScore& score);
QualityScore score_from_json(const Json& j);

}  // namespace ugap
