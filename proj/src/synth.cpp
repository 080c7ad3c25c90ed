#include "hdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hdm/error.hpp"
#include "hdm/rng.hpp"

namespace hdm::synth {

namespace {

// Filler lines deliberately avoid every default hotword phrase.
const char* kFillerLines[] = {
    "the train arrives at nine in the morning",
    "we painted the fence a pale shade of green",
    "she brought fresh bread from the bakery",
    "the meeting moved to the larger room upstairs",
    "his garden grows tomatoes and runner beans",
    "they watched the tide come in from the pier",
    "the report covers the third quarter only",
    "a light rain fell over the valley all day",
    "the orchestra rehearsed the second movement twice",
    "new tiles were laid in the hallway last week",
};

const char* kEventLines[] = {
    "Huh?", "What?", "Sorry?", "Pardon?", "Can you repeat that?", "I didn't catch that",
};

constexpr const char* kEventTag = "signal-non-understanding";
constexpr const char* kFillerTag = "statement";

}  // namespace

SynthOutput generate(const SynthConfig& config) {
  if (config.conversations < 1) throw ValidationError("need at least 1 conversation");
  if (config.events_per_conv < 0) throw ValidationError("events_per_conv must be >= 0");
  if (config.duration_s < 20.0)
    throw ValidationError("synthetic conversations must be at least 20 s");
  if (config.sample_rate_hz <= 0) throw ValidationError("sample rate must be positive");

  SynthOutput out;
  for (int ci = 0; ci < config.conversations; ++ci) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "synth-%04d", ci);
    const std::string id = id_buf;
    Rng rng = Rng::split(config.seed, "synth:" + id);

    corpus::Conversation conv;
    conv.id = id;
    conv.sample_rate_hz = config.sample_rate_hz;
    conv.duration_s = config.duration_s;

    // events: evenly slotted so contexts stay inside the audio and negatives
    // always have room
    std::vector<corpus::HdmEvent> events;
    if (config.events_per_conv > 0) {
      const double lo = 6.0, hi = config.duration_s - 2.0;
      const double slot = (hi - lo) / config.events_per_conv;
      for (int ei = 0; ei < config.events_per_conv; ++ei) {
        const double dur = rng.uniform(0.5, 0.9);
        const double margin = slot - dur - 1.0;
        const double start = lo + slot * ei + rng.uniform(0.5, std::max(0.6, margin));
        events.push_back({id, start, start + dur});
      }
    }

    // event utterances
    for (const auto& e : events) {
      corpus::Utterance u;
      u.speaker_id = "B";
      u.start_s = e.start_s;
      u.end_s = e.end_s;
      u.text = kEventLines[rng.uniform_int(0, std::size(kEventLines) - 1)];
      u.act_tag = kEventTag;
      conv.utterances.push_back(std::move(u));
    }

    // filler utterances in the gaps between events
    double cursor = 0.3;
    std::size_t next_event = 0;
    int speaker_toggle = 0;
    while (cursor < config.duration_s - 2.0) {
      if (next_event < events.size() && cursor >= events[next_event].start_s - 0.2) {
        cursor = events[next_event].end_s + rng.uniform(0.2, 0.5);
        ++next_event;
        continue;
      }
      double len = rng.uniform(1.5, 3.0);
      if (next_event < events.size())
        len = std::min(len, events[next_event].start_s - 0.2 - cursor);
      len = std::min(len, config.duration_s - 0.1 - cursor);
      if (len < 0.6) {
        cursor += 0.3;
        continue;
      }
      corpus::Utterance u;
      u.speaker_id = (speaker_toggle++ % 2 == 0) ? "A" : "C";
      u.start_s = cursor;
      u.end_s = cursor + len;
      u.text = kFillerLines[rng.uniform_int(0, std::size(kFillerLines) - 1)];
      u.act_tag = kFillerTag;
      conv.utterances.push_back(std::move(u));
      cursor = u.end_s + rng.uniform(0.2, 0.6);
    }

    std::stable_sort(conv.utterances.begin(), conv.utterances.end(),
                     [](const corpus::Utterance& a, const corpus::Utterance& b) {
                       if (a.start_s != b.start_s) return a.start_s < b.start_s;
                       return a.speaker_id < b.speaker_id;
                     });

    // audio: gaussian bed with a tone burst over each event
    audio::Waveform w;
    w.sample_rate_hz = config.sample_rate_hz;
    const auto n =
        static_cast<Eigen::Index>(std::llround(config.duration_s * config.sample_rate_hz));
    w.samples.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      w.samples[i] = static_cast<float>(rng.normal(0.0, 0.02));
    for (const auto& e : events) {
      const double freq = rng.uniform(500.0, 1000.0);
      const auto first = static_cast<Eigen::Index>(std::llround(e.start_s * config.sample_rate_hz));
      const auto last = static_cast<Eigen::Index>(std::llround(e.end_s * config.sample_rate_hz));
      const auto ramp = static_cast<Eigen::Index>(config.sample_rate_hz / 100);  // 10 ms
      for (Eigen::Index i = first; i < std::min(last, n); ++i) {
        double env = 1.0;
        if (i - first < ramp) env = static_cast<double>(i - first) / ramp;
        if (last - i < ramp) env = std::min(env, static_cast<double>(last - i) / ramp);
        w.samples[i] += static_cast<float>(
            0.25 * env * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / config.sample_rate_hz));
      }
    }
    w.samples = w.samples.min(1.0f).max(-1.0f);

    out.corpus.conversations.push_back(std::move(conv));
    out.events.insert(out.events.end(), events.begin(), events.end());
    out.audio.emplace(id, std::move(w));
  }
  return out;
}

void write_to_dir(SynthOutput& output, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "audio");
  for (auto& conv : output.corpus.conversations) {
    const std::string rel = "audio/" + conv.id + ".wav";
    audio::write_wav_file(output.audio.at(conv.id), (fs::path(out_dir) / rel).string());
    conv.audio_ref = rel;
  }
  corpus::write_corpus_file(output.corpus, (fs::path(out_dir) / "corpus.jsonl").string());
  corpus::write_events_file(output.events, (fs::path(out_dir) / "events.jsonl").string());
}

}  // namespace hdm::synth
