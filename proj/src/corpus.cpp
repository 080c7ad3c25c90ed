#include "hdm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "hdm/error.hpp"
#include "hdm/rng.hpp"

using json = nlohmann::json;

namespace hdm::corpus {

namespace {

void validate_conversation(Conversation& conv, const std::string& where) {
  if (conv.id.empty()) throw ValidationError(where + ": empty conversation id");
  if (conv.sample_rate_hz <= 0)
    throw ValidationError(where + ": sample_rate_hz must be positive (conversation " + conv.id + ")");
  if (!(conv.duration_s > 0))
    throw ValidationError(where + ": duration_s must be positive (conversation " + conv.id + ")");
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    auto& u = conv.utterances[i];
    u.act_tag = normalize_tag(u.act_tag);
    if (u.act_tag.empty())
      throw ValidationError(where + ": empty act_tag (conversation " + conv.id + ", utterance " +
                            std::to_string(i) + ")");
    if (!(u.end_s > u.start_s))
      throw ValidationError(where + ": end_s <= start_s (conversation " + conv.id + ", utterance " +
                            std::to_string(i) + ")");
    if (u.start_s < 0 || u.end_s > conv.duration_s)
      throw ValidationError(where + ": utterance interval outside [0, duration_s] (conversation " +
                            conv.id + ", utterance " + std::to_string(i) + ")");
  }
  std::stable_sort(conv.utterances.begin(), conv.utterances.end(),
                   [](const Utterance& a, const Utterance& b) {
                     if (a.start_s != b.start_s) return a.start_s < b.start_s;
                     return a.speaker_id < b.speaker_id;
                   });
}

Conversation conversation_from_json(const json& j, const std::string& where) {
  Conversation conv;
  try {
    conv.id = j.at("id").get<std::string>();
    if (j.contains("audio_ref") && !j.at("audio_ref").is_null())
      conv.audio_ref = j.at("audio_ref").get<std::string>();
    conv.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    conv.duration_s = j.at("duration_s").get<double>();
    for (const auto& ju : j.at("utterances")) {
      Utterance u;
      u.speaker_id = ju.at("speaker_id").get<std::string>();
      u.start_s = ju.at("start_s").get<double>();
      u.end_s = ju.at("end_s").get<double>();
      u.text = ju.at("text").get<std::string>();
      u.act_tag = ju.at("act_tag").get<std::string>();
      conv.utterances.push_back(std::move(u));
    }
  } catch (const json::exception& e) {
    throw ValidationError(where + ": malformed record: " + e.what());
  }
  validate_conversation(conv, where);
  return conv;
}

Corpus parse_jsonl(std::istream& input) {
  Corpus corpus;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    Conversation conv = conversation_from_json(j, "line " + std::to_string(line_no));
    if (!seen.insert(conv.id).second)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate conversation id \"" +
                            conv.id + "\"");
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

// RFC 4180: quoted fields may contain commas, newlines and "" escapes.
// Returns one row per record; tracks the line number of the record start.
struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line_no = 0;
};

std::vector<CsvRow> parse_csv(std::istream& input) {
  std::vector<CsvRow> rows;
  std::string field;
  CsvRow row;
  std::size_t line_no = 1;
  row.line_no = 1;
  bool in_quotes = false;
  bool row_has_data = false;
  char c;
  while (input.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (input.peek() == '"') {
          input.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        row.fields.push_back(std::move(field));
        field.clear();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        ++line_no;
        if (row_has_data || !field.empty() || !row.fields.empty()) {
          row.fields.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row = CsvRow{};
        }
        row.line_no = line_no;
        row_has_data = false;
        break;
      default:
        field += c;
        row_has_data = true;
        break;
    }
  }
  if (in_quotes) throw ValidationError("unterminated quoted CSV field at end of input");
  if (row_has_data || !field.empty() || !row.fields.empty()) {
    row.fields.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_seconds(const std::string& s, std::size_t line_no, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("row at line " + std::to_string(line_no) + ": bad " + what + " \"" + s +
                          "\"");
  }
}

// header: conversation_id,speaker_id,start_s,end_s,text,act_tag
// The CSV carries no durations or rates; duration is the max utterance end
// and the sample rate defaults to 16 kHz. Re-import via normalized JSONL to
// keep exact metadata.
Corpus parse_csv_corpus(std::istream& input) {
  auto rows = parse_csv(input);
  if (rows.empty()) throw ValidationError("empty CSV input");
  const std::vector<std::string> expected = {"conversation_id", "speaker_id", "start_s",
                                             "end_s",           "text",       "act_tag"};
  if (rows.front().fields != expected)
    throw ValidationError("CSV header mismatch; expected "
                          "conversation_id,speaker_id,start_s,end_s,text,act_tag");

  // Group rows by conversation id, preserving first-appearance order.
  std::vector<std::string> order;
  std::map<std::string, Conversation> by_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 6)
      throw ValidationError("row at line " + std::to_string(row.line_no) + ": expected 6 fields, got " +
                            std::to_string(row.fields.size()));
    const std::string& cid = row.fields[0];
    if (cid.empty())
      throw ValidationError("row at line " + std::to_string(row.line_no) + ": empty conversation_id");
    Utterance u;
    u.speaker_id = row.fields[1];
    u.start_s = parse_seconds(row.fields[2], row.line_no, "start_s");
    u.end_s = parse_seconds(row.fields[3], row.line_no, "end_s");
    u.text = row.fields[4];
    u.act_tag = row.fields[5];
    if (!(u.end_s > u.start_s))
      throw ValidationError("row at line " + std::to_string(row.line_no) +
                            ": end_s <= start_s (conversation " + cid + ")");
    if (u.start_s < 0)
      throw ValidationError("row at line " + std::to_string(row.line_no) + ": negative start_s");
    auto [it, inserted] = by_id.try_emplace(cid);
    if (inserted) {
      it->second.id = cid;
      order.push_back(cid);
    }
    it->second.utterances.push_back(std::move(u));
  }

  Corpus corpus;
  for (const auto& cid : order) {
    Conversation conv = std::move(by_id.at(cid));
    for (const auto& u : conv.utterances) conv.duration_s = std::max(conv.duration_s, u.end_s);
    validate_conversation(conv, "conversation " + cid);
    corpus.conversations.push_back(std::move(conv));
  }
  return corpus;
}

json conversation_to_json(const Conversation& conv) {
  json j;
  j["id"] = conv.id;
  if (conv.audio_ref.empty())
    j["audio_ref"] = nullptr;
  else
    j["audio_ref"] = conv.audio_ref;
  j["sample_rate_hz"] = conv.sample_rate_hz;
  j["duration_s"] = conv.duration_s;
  json utts = json::array();
  for (const auto& u : conv.utterances) {
    utts.push_back({{"speaker_id", u.speaker_id},
                    {"start_s", u.start_s},
                    {"end_s", u.end_s},
                    {"text", u.text},
                    {"act_tag", u.act_tag}});
  }
  j["utterances"] = std::move(utts);
  return j;
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string normalize_tag(std::string_view tag) {
  std::string t = trim(tag);
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return t;
}

const Conversation* Corpus::find(const std::string& id) const {
  for (const auto& c : conversations)
    if (c.id == id) return &c;
  return nullptr;
}

const Conversation& Corpus::at(const std::string& id) const {
  const Conversation* c = find(id);
  if (!c) throw ValidationError("unknown conversation id \"" + id + "\"");
  return *c;
}

Format format_from_name(const std::string& name) {
  if (name == "normalized-jsonl") return Format::NormalizedJsonl;
  if (name == "utterance-csv") return Format::UtteranceCsv;
  throw ValidationError("unknown corpus format \"" + name +
                        "\" (expected normalized-jsonl or utterance-csv)");
}

Corpus parse_corpus(std::istream& input, Format format) {
  switch (format) {
    case Format::NormalizedJsonl:
      return parse_jsonl(input);
    case Format::UtteranceCsv:
      return parse_csv_corpus(input);
  }
  throw ValidationError("unknown corpus format");
}

Corpus parse_corpus_file(const std::string& path, Format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open corpus file: " + path);
  return parse_corpus(in, format);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& conv : corpus.conversations) {
    out += conversation_to_json(conv).dump();
    out += '\n';
  }
  return out;
}

void write_corpus_file(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write corpus file: " + path);
  out << serialize_corpus(corpus);
}

ActTagMap parse_act_tag_map(std::istream& input) {
  // Two-column CSV: source_tag,normalized_tag. '#' starts a comment line.
  ActTagMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw ValidationError("tag map line " + std::to_string(line_no) +
                            ": expected source_tag,normalized_tag");
    std::string src = normalize_tag(t.substr(0, comma));
    std::string dst = normalize_tag(t.substr(comma + 1));
    if (src.empty() || dst.empty())
      throw ValidationError("tag map line " + std::to_string(line_no) + ": empty tag");
    map.mapping[src] = dst;
  }
  return map;
}

ActTagMap parse_act_tag_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open tag map file: " + path);
  return parse_act_tag_map(in);
}

RefinementList parse_refinement_list(std::istream& input) {
  RefinementList list;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ss(t);
    std::string verb, cid;
    long long idx = -1;
    ss >> verb >> cid >> idx;
    if (ss.fail() || (verb != "include" && verb != "exclude") || cid.empty() || idx < 0)
      throw ValidationError("refinement line " + std::to_string(line_no) +
                            ": expected `include|exclude <conversation_id> <utterance_index>`");
    list.entries.push_back({verb == "include", cid, static_cast<std::size_t>(idx)});
  }
  return list;
}

RefinementList parse_refinement_list_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open refinement file: " + path);
  return parse_refinement_list(in);
}

Corpus map_act_tags(const Corpus& corpus, const ActTagMap& map) {
  Corpus out = corpus;
  for (auto& conv : out.conversations) {
    for (auto& u : conv.utterances) {
      auto it = map.mapping.find(u.act_tag);
      if (it == map.mapping.end())
        throw ValidationError("unmapped act tag \"" + u.act_tag + "\" in conversation " + conv.id);
      u.act_tag = it->second;
    }
  }
  return out;
}

std::vector<HdmEvent> extract_hdm_events(const Corpus& corpus, const std::string& target_tag,
                                         const RefinementList& refinement) {
  const std::string tag = normalize_tag(target_tag);

  std::set<std::pair<std::string, std::size_t>> excluded, included;
  for (const auto& e : refinement.entries) {
    const Conversation* conv = corpus.find(e.conversation_id);
    if (!conv)
      throw ValidationError("refinement references unknown conversation \"" + e.conversation_id +
                            "\"");
    if (e.utterance_index >= conv->utterances.size())
      throw ValidationError("refinement references utterance " + std::to_string(e.utterance_index) +
                            " of conversation " + e.conversation_id + " which has only " +
                            std::to_string(conv->utterances.size()) + " utterances");
    auto key = std::make_pair(e.conversation_id, e.utterance_index);
    if (e.include) {
      if (excluded.count(key))
        throw ValidationError("refinement lists " + e.conversation_id + " " +
                              std::to_string(e.utterance_index) + " as both include and exclude");
      included.insert(key);
    } else {
      if (included.count(key))
        throw ValidationError("refinement lists " + e.conversation_id + " " +
                              std::to_string(e.utterance_index) + " as both include and exclude");
      excluded.insert(key);
    }
  }

  std::vector<HdmEvent> events;
  for (const auto& conv : corpus.conversations) {
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      auto key = std::make_pair(conv.id, i);
      bool tagged = conv.utterances[i].act_tag == tag;
      bool selected = (tagged && !excluded.count(key)) || included.count(key);
      if (selected)
        events.push_back({conv.id, conv.utterances[i].start_s, conv.utterances[i].end_s});
    }
  }
  return events;
}

StatsReport corpus_stats(const Corpus& corpus, const std::vector<HdmEvent>& events,
                         int histogram_bin_ms) {
  if (histogram_bin_ms <= 0) throw ValidationError("histogram bin width must be positive");
  StatsReport report;
  report.histogram_bin_ms = histogram_bin_ms;
  report.conversation_count = corpus.conversations.size();
  for (const auto& conv : corpus.conversations) report.utterance_count += conv.utterances.size();
  report.event_count = events.size();

  std::vector<double> durations;
  durations.reserve(events.size());
  for (const auto& e : events) {
    if (!corpus.find(e.conversation_id))
      throw ValidationError("event references unknown conversation \"" + e.conversation_id + "\"");
    durations.push_back(e.end_s - e.start_s);
  }
  if (durations.empty()) return report;

  double sum = 0;
  double max_d = 0;
  for (double d : durations) {
    sum += d;
    max_d = std::max(max_d, d);
  }
  report.mean_duration_s = sum / static_cast<double>(durations.size());

  std::sort(durations.begin(), durations.end());
  std::size_t n = durations.size();
  report.median_duration_s =
      (n % 2 == 1) ? durations[n / 2] : 0.5 * (durations[n / 2 - 1] + durations[n / 2]);

  // nanosecond nudge so durations that are exact bin multiples up to float
  // error land in the expected bin
  auto bin_of = [&](double d) {
    return static_cast<std::size_t>(std::floor((d * 1000.0 + 1e-6) / histogram_bin_ms));
  };
  std::size_t bins = bin_of(max_d) + 1;
  report.histogram.assign(bins, 0);
  for (double d : durations) {
    auto b = bin_of(d);
    if (b >= bins) b = bins - 1;
    report.histogram[b]++;
  }
  return report;
}

std::vector<HdmEvent> parse_events(std::istream& input) {
  std::vector<HdmEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      HdmEvent e;
      e.conversation_id = j.at("conversation_id").get<std::string>();
      e.start_s = j.at("start_s").get<double>();
      e.end_s = j.at("end_s").get<double>();
      if (!(e.end_s > e.start_s))
        throw ValidationError("events line " + std::to_string(line_no) + ": end_s <= start_s");
      events.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ValidationError("events line " + std::to_string(line_no) + ": malformed record: " +
                            ex.what());
    }
  }
  return events;
}

std::vector<HdmEvent> parse_events_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open events file: " + path);
  return parse_events(in);
}

std::string serialize_events(const std::vector<HdmEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    json j{{"conversation_id", e.conversation_id}, {"start_s", e.start_s}, {"end_s", e.end_s}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_events_file(const std::vector<HdmEvent>& events, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write events file: " + path);
  out << serialize_events(events);
}

std::uint64_t corpus_fingerprint(const Corpus& corpus) {
  return fnv1a64(serialize_corpus(corpus));
}

}  // namespace hdm::corpus
