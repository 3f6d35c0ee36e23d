#include "ugap/records.hpp"

#include <fstream>
#include <sstream>

#include "ugap/errors.hpp"

namespace ugap {

namespace {

template <typename T>
T get_field(const Json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw InputError(std::string("missing field ") + name);
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw InputError(std::string("field ") + name + " has the wrong type");
  }
}

Json metrics_json(const MetricSet& m, const std::string& prefix, Json& out) {
  out[prefix + "_nll"] = m.nll;
  out[prefix + "_ppl"] = m.ppl;
  out[prefix + "_pmi"] = m.pmi;
  out[prefix + "_cpmi"] = m.cpmi;
  out[prefix + "_n_tokens"] = m.n_tokens;
  return out;
}

MetricSet metrics_from(const Json& j, const std::string& prefix) {
  MetricSet m;
  m.nll = get_field<double>(j, (prefix + "_nll").c_str());
  m.ppl = get_field<double>(j, (prefix + "_ppl").c_str());
  m.pmi = get_field<double>(j, (prefix + "_pmi").c_str());
  m.cpmi = get_field<double>(j, (prefix + "_cpmi").c_str());
  m.n_tokens = get_field<std::size_t>(j, (prefix + "_n_tokens").c_str());
  return m;
}

}  // namespace

void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const Json&, std::size_t)>& fn,
                bool tolerate_torn_tail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    const bool last_without_newline = end == std::string::npos;
    if (last_without_newline) end = content.size();
    std::string line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      if (tolerate_torn_tail && last_without_newline) return;
      throw InputError(path.string() + ": line " + std::to_string(line_no) +
                       ": malformed JSON: " + e.what());
    }
    try {
      fn(j, line_no);
    } catch (const InputError& e) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& lines) {
  std::string content;
  for (const auto& j : lines) {
    content += j.dump();
    content += '\n';
  }
  write_text_atomic(path, content);
}

Json to_json(const SegmentPair& pair) {
  return {{"story_id", pair.story_id},
          {"dataset", pair.dataset},
          {"domain", pair.domain},
          {"k", pair.k},
          {"context", pair.context},
          {"separator", pair.separator},
          {"continuation", pair.continuation},
          {"context_token_count", pair.context_token_count}};
}

SegmentPair pair_from_json(const Json& j) {
  SegmentPair p;
  p.story_id = get_field<std::string>(j, "story_id");
  p.dataset = j.value("dataset", std::string{});
  p.domain = j.value("domain", std::string{});
  p.k = get_field<std::size_t>(j, "k");
  p.context = get_field<std::string>(j, "context");
  p.separator = j.value("separator", std::string(" "));
  p.continuation = get_field<std::string>(j, "continuation");
  p.context_token_count = j.value("context_token_count", std::size_t{0});
  return p;
}

std::vector<SegmentPair> read_pairs(const std::filesystem::path& path) {
  std::vector<SegmentPair> pairs;
  read_jsonl(path, [&](const Json& j, std::size_t) { pairs.push_back(pair_from_json(j)); });
  return pairs;
}

Json to_json(const PairedRecord& r) {
  Json j = {{"story_id", r.story_id},
            {"k", r.k},
            {"dataset", r.dataset},
            {"domain", r.domain},
            {"model_id", r.model_id},
            {"length_mismatch", r.length_mismatch},
            {"truncated", r.truncated},
            {"model_text", r.model_text}};
  metrics_json(r.human, "human", j);
  metrics_json(r.model, "model", j);
  return j;
}

PairedRecord record_from_json(const Json& j) {
  PairedRecord r;
  r.story_id = get_field<std::string>(j, "story_id");
  r.k = get_field<std::size_t>(j, "k");
  r.dataset = j.value("dataset", std::string{});
  r.domain = j.value("domain", std::string{});
  r.model_id = get_field<std::string>(j, "model_id");
  r.human = metrics_from(j, "human");
  r.model = metrics_from(j, "model");
  r.length_mismatch = j.value("length_mismatch", false);
  r.truncated = j.value("truncated", false);
  r.model_text = j.value("model_text", std::string{});
  return r;
}

std::vector<PairedRecord> read_records(const std::filesystem::path& path,
                                       bool tolerate_torn_tail) {
  std::vector<PairedRecord> records;
  read_jsonl(
      path, [&](const Json& j, std::size_t) { records.push_back(record_from_json(j)); },
      tolerate_torn_tail);
  return records;
}

Json to_json(const SamplingConfig& s) {
  Json j = {{"temperature", s.temperature}, {"top_p", s.top_p}, {"max_tokens", s.max_tokens}};
  j["seed"] = s.seed ? Json(*s.seed) : Json(nullptr);
  return j;
}

Json to_json(const TraceLine& line) {
  std::vector<int> imputed(line.trace.imputed.begin(), line.trace.imputed.end());
  Json imputed_json = Json::array();
  for (int flag : imputed) imputed_json.push_back(flag != 0);
  return {{"story_id", line.story_id},
          {"k", line.k},
          {"role", role_name(line.role)},
          {"pass", line.pass},
          {"tokens", line.trace.tokens},
          {"logprobs", line.trace.logprobs},
          {"imputed", imputed_json},
          {"truncated", line.truncated},
          {"model", line.model},
          {"sampling", line.sampling}};
}

TraceLine trace_line_from_json(const Json& j) {
  TraceLine line;
  line.story_id = get_field<std::string>(j, "story_id");
  line.k = get_field<std::size_t>(j, "k");
  line.role = parse_role(get_field<std::string>(j, "role"));
  line.pass = get_field<std::string>(j, "pass");
  line.trace.tokens = get_field<std::vector<std::string>>(j, "tokens");
  line.trace.logprobs = get_field<std::vector<double>>(j, "logprobs");
  for (bool flag : get_field<std::vector<bool>>(j, "imputed")) line.trace.imputed.push_back(flag);
  line.trace.topk.resize(line.trace.tokens.size());
  line.truncated = j.value("truncated", false);
  line.model = j.value("model", std::string{});
  line.sampling = j.value("sampling", Json::object());
  return line;
}

std::vector<TraceLine> trace_lines(const PairEvaluation& ev, const SamplingConfig& sampling) {
  const PairedRecord& r = ev.record;
  auto make = [&](Role role, const char* pass, const TokenTrace& trace, bool truncated) {
    TraceLine line;
    line.story_id = r.story_id;
    line.k = r.k;
    line.role = role;
    line.pass = pass;
    line.trace = trace;
    line.truncated = truncated;
    line.model = r.model_id;
    line.sampling = to_json(sampling);
    return line;
  };
  return {make(Role::kHuman, "conditional", ev.human_conditional, false),
          make(Role::kHuman, "unconditional", ev.human_unconditional, false),
          make(Role::kModel, "conditional", ev.generation.trace, ev.generation.truncated),
          make(Role::kModel, "unconditional", ev.model_unconditional, ev.generation.truncated)};
}

Json to_json(const QualityScore& s) {
  Json j = {{"story_id", s.story_id},
            {"k", s.k},
            {"role", role_name(s.role)},
            {"score", s.excluded ? Json(nullptr) : Json(s.score)},
            {"word_count", s.word_count},
            {"excluded", s.excluded}};
  if (!s.model_id.empty()) j["model_id"] = s.model_id;
  return j;
}

QualityScore score_from_json(const Json& j) {
  QualityScore s;
  s.story_id = get_field<std::string>(j, "story_id");
  s.k = get_field<std::size_t>(j, "k");
  s.role = parse_role(get_field<std::string>(j, "role"));
  s.excluded = j.value("excluded", false);
  s.word_count = j.value("word_count", std::size_t{0});
  if (!s.excluded) s.score = get_field<double>(j, "score");
  s.model_id = j.value("model_id", std::string{});
  return s;
}

}  // namespace ugap
