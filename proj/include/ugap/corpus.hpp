#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ugap {

struct Story {
  std::string id;
  std::string text;
  std::string domain;
  std::map<std::string, std::string> meta;
};

/// Sentences plus the whitespace around them. `gaps` has one more element
/// than `sentences`: gaps[0] precedes the first sentence, gaps[i] sits between
/// sentence i-1 and sentence i, and gaps.back() trails the last one.
struct Segmentation {
  std::vector<std::string> sentences;
  std::vector<std::string> gaps;

  std::size_t size() const { return sentences.size(); }
  /// Reassembles the original text byte-for-byte.
  std::string join() const;
};

/// One scoring unit: the k-th sentence of a story and everything before it.
struct SegmentPair {
  std::string story_id;
  std::string dataset;
  std::string domain;
  std::size_t k = 0;  // 1-based index of the continuation sentence
  std::string context;
  std::string separator;  // original whitespace between context and continuation
  std::string continuation;
  std::size_t context_token_count = 0;

  bool operator==(const SegmentPair&) const = default;
};

using TokenCounter = std::function<std::size_t(std::string_view)>;

struct FilterResult {
  std::vector<Story> kept;
  std::size_t removed = 0;
};

/// Reads a JSONL corpus. Records without "domain" get `domain_default`.
/// Throws InputError naming the line for malformed records and naming the id
/// for duplicates.
std::vector<Story> load_corpus(const std::filesystem::path& path,
                               const std::string& domain_default);

/// Parses corpus records from an in-memory stream of JSONL lines.
std::vector<Story> parse_corpus(std::istream& in, const std::string& domain_default);

/// Keeps stories whose token count is <= max_tokens, in order.
FilterResult filter_by_length(const std::vector<Story>& stories, std::size_t max_tokens,
                              const TokenCounter& count_tokens);

/// Rule-based, lossless sentence splitter.
///
/// A boundary is placed after a run of `.`, `!` or `?` (plus any closing
/// quotes or brackets) when it is followed by whitespace and then an
/// uppercase letter or an opening quote, unless the word ending in `.` is a
/// known abbreviation. A whitespace run containing a blank line is always a
/// boundary.
Segmentation segment_sentences(std::string_view text);

/// Cumulative-prefix pairs for k = 2..m. Returns nothing for m < 2.
std::vector<SegmentPair> build_pairs(const Story& story, const Segmentation& sentences,
                                     const std::string& dataset = {},
                                     const TokenCounter& count_tokens = {});

/// Whitespace-delimited word count.
std::size_t count_words(std::string_view text);

/// Splits on ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace ugap
