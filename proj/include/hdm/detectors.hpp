#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hdm/audio.hpp"
#include "hdm/rng.hpp"
#include "hdm/timeline.hpp"

namespace hdm::detect {

// Probability of the positive class.
using Score = double;

// One scoring request: the fixed-length context audio ending at end_time_s.
// conversation_id, when known, travels as request metadata so a mock endpoint
// can locate the window without fingerprinting the audio.
struct WindowInput {
  audio::Waveform waveform;
  std::optional<std::string> transcript;
  double end_time_s = 0.0;
  std::optional<std::string> conversation_id;
};

struct HotwordLexicon {
  std::vector<std::string> phrases;  // each 1..6 lowercase tokens
};

HotwordLexicon default_lexicon();
HotwordLexicon parse_lexicon(std::istream& input);
HotwordLexicon parse_lexicon_file(const std::string& path);
void validate_lexicon(const HotwordLexicon& lexicon);

enum class PromptVariant { Audio, TextOnly };

struct PromptTemplate {
  std::string instruction;
  PromptVariant variant = PromptVariant::Audio;
};

PromptTemplate default_audio_template();
PromptTemplate default_text_template();
PromptTemplate load_template_file(const std::string& path, PromptVariant variant);
void validate_template(const PromptTemplate& t);

struct FewShotExample {
  timeline::ExampleSpec spec;
  bool positive = false;
  audio::Waveform waveform;   // resolved context audio (audio prompting)
  std::string transcript;     // resolved transcript (text-only prompting)
};

struct FewShotSet {
  std::vector<FewShotExample> examples;  // equal P and N counts, shuffled
};

// Draw k/2 positives and k/2 negatives without replacement from the given
// examples, order shuffled. Audio/transcripts are resolved by the caller.
FewShotSet assemble_fewshot(const std::vector<timeline::ExampleSpec>& train_examples, int k,
                            Rng& rng);

struct PromptSegment {
  std::string audio_b64;                // PCM16 mono 16 kHz WAV
  std::optional<std::string> label;     // "P"/"N"; absent for the target
};

struct PromptPayload {
  std::string text;                     // instruction + example blocks
  std::vector<PromptSegment> segments;  // empty for the text-only variant
};

// Instruction, then one block per few-shot example, then the unlabeled target
// block last. The text-only variant inlines transcripts instead of audio.
PromptPayload build_prompt(const PromptTemplate& tmpl, const FewShotSet& fewshot,
                           const WindowInput& target);

// Two-way softmax over the P/N next-token log probabilities.
Score pn_probability(double logprob_p, double logprob_n);

enum class DetectorKind { Hotword, LmAudio, LmText, Classifier };

DetectorKind detector_kind_from_name(const std::string& name);
std::string detector_kind_name(DetectorKind kind);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::Hotword;
  std::string endpoint;  // http://host:port; empty allowed for offline hotword
  HotwordLexicon lexicon = default_lexicon();
  PromptTemplate audio_template = default_audio_template();
  PromptTemplate text_template = default_text_template();
  int fewshot_k = 0;
  double timeout_s = 30.0;
  int max_retries = 3;
  int backoff_ms = 100;  // initial backoff, doubled per retry
  int in_flight = 4;     // concurrent requests when scoring many windows
};

// 1.0 iff any lexicon phrase occurs as a consecutive token run in the
// lowercased, punctuation-stripped transcript.
Score detect_hotword(const std::string& transcript, const HotwordLexicon& lexicon);

// HTTP client for the model wire protocol. One instance per thread.
class ModelClient {
 public:
  ModelClient(const std::string& endpoint, double timeout_s = 30.0, int max_retries = 3,
              int backoff_ms = 100);
  ~ModelClient();
  ModelClient(ModelClient&&) noexcept;
  ModelClient& operator=(ModelClient&&) noexcept;

  std::string transcribe(const WindowInput& window);
  std::pair<double, double> logprobs(const PromptPayload& prompt, const WindowInput& target);
  double classify(const WindowInput& window);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Score score_window(const DetectorConfig& config, const WindowInput& window,
                   const FewShotSet& fewshot, ModelClient& client);
Score score_window(const DetectorConfig& config, const WindowInput& window,
                   const FewShotSet& fewshot = {});

// Score many windows with up to config.in_flight concurrent requests.
// Output order matches input order regardless of scheduling.
std::vector<Score> score_windows(const DetectorConfig& config,
                                 const std::vector<WindowInput>& windows,
                                 const FewShotSet& fewshot = {});

}  // namespace hdm::detect
