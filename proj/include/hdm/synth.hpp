#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hdm/audio.hpp"
#include "hdm/corpus.hpp"

namespace hdm::synth {

// Generates conversations with planted hearing-difficulty events: tone bursts
// over a noise bed, scripted transcripts, and the matching annotations. Lets
// the whole pipeline run with zero external data.
struct SynthConfig {
  int conversations = 20;
  int events_per_conv = 2;
  double duration_s = 60.0;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 0;
};

struct SynthOutput {
  corpus::Corpus corpus;
  std::vector<corpus::HdmEvent> events;
  std::map<std::string, audio::Waveform> audio;  // by conversation id
};

SynthOutput generate(const SynthConfig& config);

// Writes audio/<id>.wav, corpus.jsonl and events.jsonl under out_dir and
// points each conversation's audio_ref at its file.
void write_to_dir(SynthOutput& output, const std::string& out_dir);

}  // namespace hdm::synth
