#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hdm::corpus {

struct Utterance {
  std::string speaker_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
  std::string act_tag;  // normalized: lowercased, trimmed
};

struct Conversation {
  std::string id;
  std::string audio_ref;  // empty = no audio
  int sample_rate_hz = 16000;
  double duration_s = 0.0;
  std::vector<Utterance> utterances;  // sorted by start_s, ties by speaker_id
};

struct Corpus {
  std::vector<Conversation> conversations;

  const Conversation* find(const std::string& id) const;
  const Conversation& at(const std::string& id) const;  // throws if absent
};

// Total mapping from source act tags to normalized tags. Tags are compared
// after lowercasing and trimming.
struct ActTagMap {
  std::map<std::string, std::string> mapping;
};

// Manual curation of tagged utterances: exclude entries remove events,
// include entries add events for utterances the tag filter missed.
struct RefinementEntry {
  bool include = false;  // false = exclude
  std::string conversation_id;
  std::size_t utterance_index = 0;
};

struct RefinementList {
  std::vector<RefinementEntry> entries;
};

struct HdmEvent {
  std::string conversation_id;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct StatsReport {
  std::size_t conversation_count = 0;
  std::size_t utterance_count = 0;
  std::size_t event_count = 0;
  std::optional<double> mean_duration_s;
  std::optional<double> median_duration_s;
  int histogram_bin_ms = 100;
  std::vector<std::size_t> histogram;  // bin i counts durations in [i*bin, (i+1)*bin) ms
};

enum class Format { NormalizedJsonl, UtteranceCsv };

// Lowercase + trim; the normalization applied to act tags everywhere.
std::string normalize_tag(std::string_view tag);

Corpus parse_corpus(std::istream& input, Format format);
Corpus parse_corpus_file(const std::string& path, Format format);
Format format_from_name(const std::string& name);  // "normalized-jsonl" | "utterance-csv"

// One conversation per line, the normalized schema. parse(serialize(c)) is
// structurally identical to c.
std::string serialize_corpus(const Corpus& corpus);
void write_corpus_file(const Corpus& corpus, const std::string& path);

ActTagMap parse_act_tag_map(std::istream& input);
ActTagMap parse_act_tag_map_file(const std::string& path);

RefinementList parse_refinement_list(std::istream& input);
RefinementList parse_refinement_list_file(const std::string& path);

Corpus map_act_tags(const Corpus& corpus, const ActTagMap& map);

std::vector<HdmEvent> extract_hdm_events(const Corpus& corpus,
                                         const std::string& target_tag,
                                         const RefinementList& refinement);

StatsReport corpus_stats(const Corpus& corpus, const std::vector<HdmEvent>& events,
                         int histogram_bin_ms = 100);

// Events travel as JSONL: {"conversation_id","start_s","end_s"} per line.
std::vector<HdmEvent> parse_events(std::istream& input);
std::vector<HdmEvent> parse_events_file(const std::string& path);
std::string serialize_events(const std::vector<HdmEvent>& events);
void write_events_file(const std::vector<HdmEvent>& events, const std::string& path);

// FNV-1a fingerprint of the serialized corpus; recorded in dataset provenance.
std::uint64_t corpus_fingerprint(const Corpus& corpus);

}  // namespace hdm::corpus
