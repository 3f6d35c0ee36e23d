#include "ugap/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ugap/errors.hpp"

namespace ugap {

using json = nlohmann::json;

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

bool starts_with(std::string_view s, std::size_t pos, std::string_view prefix) {
  return s.substr(pos, prefix.size()) == prefix;
}

// Closing quotes and brackets that may trail a terminator: " ' ) ] ” ’
std::size_t closer_length(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return 0;
  const char c = s[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  if (starts_with(s, pos, "\xE2\x80\x9D") || starts_with(s, pos, "\xE2\x80\x99")) return 3;
  return 0;
}

// Uppercase letter (ASCII or Latin-1 supplement) or an opening quote/bracket.
bool opens_sentence(std::string_view s, std::size_t pos) {
  const auto c = static_cast<unsigned char>(s[pos]);
  if (c >= 'A' && c <= 'Z') return true;
  if (c == '"' || c == '\'' || c == '(' || c == '[') return true;
  if (starts_with(s, pos, "\xE2\x80\x9C") || starts_with(s, pos, "\xE2\x80\x98")) return true;
  if (c == 0xC3 && pos + 1 < s.size()) {
    const auto d = static_cast<unsigned char>(s[pos + 1]);
    return d >= 0x80 && d <= 0x9E && d != 0x97;
  }
  return false;
}

constexpr std::array<std::string_view, 9> kAbbreviations = {
    "mr.", "mrs.", "ms.", "dr.", "st.", "vs.", "e.g.", "i.e.", "etc."};

// `end` points one past the terminating period.
bool is_abbreviation(std::string_view s, std::size_t end) {
  std::size_t begin = end;
  while (begin > 0 && !is_space(s[begin - 1])) --begin;
  while (begin < end && (s[begin] == '"' || s[begin] == '\'' || s[begin] == '(' ||
                         s[begin] == '[')) {
    ++begin;
  }
  std::string word(s.substr(begin, end - begin));
  std::transform(word.begin(), word.end(), word.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) !=
         kAbbreviations.end();
}

std::string require_string(const json& obj, const char* field, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw InputError("line " + std::to_string(line_no) + ": missing field " + field);
  }
  if (!it->is_string()) {
    throw InputError("line " + std::to_string(line_no) + ": field " + field +
                     " is not a string");
  }
  return it->get<std::string>();
}

}  // namespace

std::string Segmentation::join() const {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out += gaps[i];
    out += sentences[i];
  }
  out += gaps.empty() ? std::string{} : gaps.back();
  return out;
}

std::vector<Story> parse_corpus(std::istream& in, const std::string& domain_default) {
  std::vector<Story> stories;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](char c) { return is_space(c); })) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object()) {
      throw InputError("line " + std::to_string(line_no) + ": record is not an object");
    }

    Story story;
    story.id = require_string(obj, "id", line_no);
    story.text = require_string(obj, "text", line_no);
    if (story.id.empty()) throw InputError("line " + std::to_string(line_no) + ": empty id");
    if (story.text.empty()) {
      throw InputError("line " + std::to_string(line_no) + ": empty text");
    }
    story.domain = obj.contains("domain") ? require_string(obj, "domain", line_no)
                                          : domain_default;
    if (auto meta = obj.find("meta"); meta != obj.end()) {
      if (!meta->is_object()) {
        throw InputError("line " + std::to_string(line_no) + ": meta is not an object");
      }
      for (const auto& [key, value] : meta->items()) {
        if (!value.is_string()) {
          throw InputError("line " + std::to_string(line_no) + ": meta." + key +
                           " is not a string");
        }
        story.meta.emplace(key, value.get<std::string>());
      }
    }
    if (!seen.insert(story.id).second) throw InputError("duplicate story id: " + story.id);
    stories.push_back(std::move(story));
  }
  return stories;
}

std::vector<Story> load_corpus(const std::filesystem::path& path,
                               const std::string& domain_default) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open corpus: " + path.string());
  try {
    return parse_corpus(in, domain_default);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

FilterResult filter_by_length(const std::vector<Story>& stories, std::size_t max_tokens,
                              const TokenCounter& count_tokens) {
  if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
  FilterResult result;
  for (const auto& story : stories) {
    std::size_t n = 0;
    try {
      n = count_tokens(story.text);
    } catch (const std::exception& e) {
      throw InputError("tokenizer failed on story " + story.id + ": " + e.what());
    }
    if (n <= max_tokens) {
      result.kept.push_back(story);
    } else {
      ++result.removed;
    }
  }
  return result;
}

Segmentation segment_sentences(std::string_view text) {
  // (end of sentence, start of next sentence) for every interior boundary.
  std::vector<std::pair<std::size_t, std::size_t>> boundaries;

  const std::size_t n = text.size();
  std::size_t first = 0;
  while (first < n && is_space(text[first])) ++first;

  std::size_t pending_end = std::string_view::npos;  // end of a terminator run + closers
  bool pending_abbrev = false;

  std::size_t i = first;
  while (i < n) {
    if (is_space(text[i])) {
      std::size_t w = i;
      int newlines = 0;
      while (w < n && is_space(text[w])) {
        if (text[w] == '\n') ++newlines;
        ++w;
      }
      if (w < n) {
        const bool after_terminator = pending_end == i && !pending_abbrev;
        if (newlines >= 2 || (after_terminator && opens_sentence(text, w))) {
          boundaries.emplace_back(i, w);
        }
      }
      pending_end = std::string_view::npos;
      i = w;
      continue;
    }
    if (is_terminator(text[i])) {
      std::size_t j = i;
      while (j < n && is_terminator(text[j])) ++j;
      const bool single_period = (j - i == 1) && text[i] == '.';
      pending_abbrev = single_period && is_abbreviation(text, j);
      while (std::size_t len = closer_length(text, j)) j += len;
      pending_end = j;
      i = j;
      continue;
    }
    ++i;
  }

  Segmentation seg;
  if (first == n) {
    seg.gaps.emplace_back(text);
    return seg;
  }
  std::size_t last = n;
  while (last > 0 && is_space(text[last - 1])) --last;

  seg.gaps.emplace_back(text.substr(0, first));
  std::size_t start = first;
  for (const auto& [end, next] : boundaries) {
    seg.sentences.emplace_back(text.substr(start, end - start));
    seg.gaps.emplace_back(text.substr(end, next - end));
    start = next;
  }
  seg.sentences.emplace_back(text.substr(start, last - start));
  seg.gaps.emplace_back(text.substr(last));
  return seg;
}

std::vector<SegmentPair> build_pairs(const Story& story, const Segmentation& sentences,
                                     const std::string& dataset,
                                     const TokenCounter& count_tokens) {
  std::vector<SegmentPair> pairs;
  const std::size_t m = sentences.size();
  if (m < 2) return pairs;
  pairs.reserve(m - 1);

  std::string context = sentences.sentences[0];
  for (std::size_t k = 2; k <= m; ++k) {
    SegmentPair pair;
    pair.story_id = story.id;
    pair.dataset = dataset;
    pair.domain = story.domain;
    pair.k = k;
    pair.context = context;
    pair.separator = sentences.gaps[k - 1];
    pair.continuation = sentences.sentences[k - 1];
    if (count_tokens) pair.context_token_count = count_tokens(pair.context);

    context += pair.separator;
    context += pair.continuation;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::size_t count_words(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace ugap
