#include "hdm/detectors.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hdm/base64.hpp"
#include "hdm/error.hpp"

using json = nlohmann::json;

namespace hdm::detect {

namespace {

// Lowercase, punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

const char* kAudioInstruction = R"(You are an expert at analyzing if a speaker in a given conversation is having difficulties understanding or hearing at a given moment. Please consider the following factors:

  * **Non-semantic information:**  Assess the general tone and pitch expressed in the speakers voice. Is it predominantly strained, or at ease? The lombard effect describes the things to look out for when someone is struggling in conversation:
    - increase in phonetic fundamental frequencies
    - shift in energy from low frequency bands to middle or high bands
    - increase in sound intensity
    - increase in vowel duration
    - spectral tilting
    - shift in formant center frequencies for F1 (mainly) and F2
    - the duration of content words are prolonged to a greater degree in noise than function words
    - greater lung volumes are used
  * **Semantic information:**  Pay attention to what they are saying and any keywords which might indicate that they are struggling to understand something. Are they asking for clarifications? Common examples to look out for (not exhaustive):
    - What?
    - Can you repeat that?
    - I didn't catch that?
    - Huh?
    - Sorry?
  * **Subjectivity:**  Recognize that some experiences are inherently subjective. Focus on the speaker's experience rather than your personal opinions. Do you think they are having a moment of hearing difficulty?

  Use all of the context available but make your judgement only on if the current moment (ie. the end of the audio) is a hearing difficulty event or not.

  Answer only with "P" for POSITIVE meaning a hearing difficulty event or "N" for NEGATIVE meaning it isn't a hearing difficulty event. Do not include any other rationale or fluff in your response.)";

const char* kTextInstruction = R"(You are an expert at analyzing if a speaker in a given conversation is having difficulties understanding or hearing at a given moment. Please consider the following factors:

  * **Semantic information:**  Pay attention to what they are saying and any keywords which might indicate that they are struggling to understand something. Are they asking for clarifications? Common examples to look out for (not exhaustive):
    - What?
    - Can you repeat that?
    - I didn't catch that?
    - Huh?
    - Sorry?
  * **Subjectivity:**  Recognize that some experiences are inherently subjective. Focus on the speaker's experience rather than your personal opinions. Do you think they are having a moment of hearing difficulty?

  Use all of the context available but make your judgement only on if the current moment (ie. the end of the transcript) is a hearing difficulty event or not.

  Answer only with "P" for POSITIVE meaning a hearing difficulty event or "N" for NEGATIVE meaning it isn't a hearing difficulty event. Do not include any other rationale or fluff in your response.)";

json window_meta(const WindowInput& window) {
  json meta;
  meta["t_s"] = window.end_time_s;
  meta["context_start_s"] = window.end_time_s - window.waveform.duration_s();
  if (window.conversation_id) meta["conversation_id"] = *window.conversation_id;
  return meta;
}

std::string window_audio_b64(const WindowInput& window) {
  return base64_encode(audio::write_wav(window.waveform, audio::WavFormat::Pcm16));
}

}  // namespace

HotwordLexicon default_lexicon() {
  // the clarification keywords from the prompt, plus "pardon"
  HotwordLexicon lex;
  lex.phrases = {"what", "can you repeat that", "i didn't catch that", "huh", "sorry", "pardon"};
  return lex;
}

HotwordLexicon parse_lexicon(std::istream& input) {
  HotwordLexicon lex;
  std::string line;
  while (std::getline(input, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    lex.phrases.push_back(line.substr(b, e - b + 1));
  }
  validate_lexicon(lex);
  return lex;
}

HotwordLexicon parse_lexicon_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open lexicon file: " + path);
  return parse_lexicon(in);
}

void validate_lexicon(const HotwordLexicon& lexicon) {
  if (lexicon.phrases.empty()) throw ValidationError("lexicon is empty");
  for (const auto& phrase : lexicon.phrases) {
    auto tokens = tokenize(phrase);
    if (tokens.empty() || tokens.size() > 6)
      throw ValidationError("lexicon phrase \"" + phrase + "\" must have 1..6 tokens");
  }
}

PromptTemplate default_audio_template() { return {kAudioInstruction, PromptVariant::Audio}; }
PromptTemplate default_text_template() { return {kTextInstruction, PromptVariant::TextOnly}; }

PromptTemplate load_template_file(const std::string& path, PromptVariant variant) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open template file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PromptTemplate t{text, variant};
  validate_template(t);
  return t;
}

void validate_template(const PromptTemplate& t) {
  std::string lower = t.instruction;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t.variant == PromptVariant::Audio) {
    if (lower.find("lombard") == std::string::npos)
      throw ValidationError("audio prompt template must describe the lombard-effect cues");
  } else {
    if (lower.find("audio") != std::string::npos)
      throw ValidationError("text-only prompt template must not reference audio cues");
  }
}

Score detect_hotword(const std::string& transcript, const HotwordLexicon& lexicon) {
  validate_lexicon(lexicon);
  auto words = tokenize(transcript);
  for (const auto& phrase : lexicon.phrases) {
    auto needle = tokenize(phrase);
    if (needle.empty() || needle.size() > words.size()) continue;
    for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
      if (std::equal(needle.begin(), needle.end(), words.begin() + static_cast<long>(i))) return 1.0;
    }
  }
  return 0.0;
}

FewShotSet assemble_fewshot(const std::vector<timeline::ExampleSpec>& train_examples, int k,
                            Rng& rng) {
  if (k < 0 || k % 2 != 0) throw ValidationError("few-shot k must be even and non-negative");
  FewShotSet set;
  if (k == 0) return set;

  std::vector<const timeline::ExampleSpec*> pos, neg;
  for (const auto& e : train_examples)
    (e.label == timeline::Label::Positive ? pos : neg).push_back(&e);
  const auto half = static_cast<std::size_t>(k / 2);
  if (pos.size() < half || neg.size() < half)
    throw ValidationError("insufficient examples for " + std::to_string(k) + "-shot prompt: have " +
                          std::to_string(pos.size()) + " positives, " + std::to_string(neg.size()) +
                          " negatives");

  rng.shuffle(pos);
  rng.shuffle(neg);
  for (std::size_t i = 0; i < half; ++i) {
    set.examples.push_back({*pos[i], true, {}, {}});
    set.examples.push_back({*neg[i], false, {}, {}});
  }
  rng.shuffle(set.examples);
  return set;
}

PromptPayload build_prompt(const PromptTemplate& tmpl, const FewShotSet& fewshot,
                           const WindowInput& target) {
  validate_template(tmpl);
  PromptPayload payload;
  std::ostringstream text;
  text << tmpl.instruction << "\n\n";

  if (tmpl.variant == PromptVariant::Audio) {
    std::size_t n = 0;
    for (const auto& ex : fewshot.examples) {
      if (ex.waveform.samples.size() == 0)
        throw ValidationError("few-shot example has no audio for the audio prompt variant");
      payload.segments.push_back(
          {base64_encode(audio::write_wav(ex.waveform, audio::WavFormat::Pcm16)),
           ex.positive ? "P" : "N"});
      text << "Audio: [audio segment " << ++n << "], Label: " << (ex.positive ? "P" : "N") << "\n";
    }
    payload.segments.push_back({window_audio_b64(target), std::nullopt});
    text << "Audio: [audio segment " << n + 1 << "], Label: ";
  } else {
    if (!target.transcript)
      throw ValidationError("text-only prompt variant requires a transcript");
    for (const auto& ex : fewshot.examples) {
      if (ex.transcript.empty())
        throw ValidationError("few-shot example has no transcript for the text-only variant");
      text << "Transcript: " << ex.transcript << ", Label: " << (ex.positive ? "P" : "N") << "\n";
    }
    text << "Transcript: " << *target.transcript << ", Label: ";
  }
  payload.text = text.str();
  return payload;
}

Score pn_probability(double logprob_p, double logprob_n) {
  const bool p_inf = std::isinf(logprob_p) && logprob_p < 0;
  const bool n_inf = std::isinf(logprob_n) && logprob_n < 0;
  if (p_inf && n_inf) throw ValidationError("degenerate logprobs: both P and N are -infinity");
  if (std::isnan(logprob_p) || std::isnan(logprob_n))
    throw ValidationError("logprobs must be finite or -infinity");
  if (p_inf) return 0.0;
  if (n_inf) return 1.0;
  const double m = std::max(logprob_p, logprob_n);
  const double ep = std::exp(logprob_p - m);
  const double en = std::exp(logprob_n - m);
  return ep / (ep + en);
}

DetectorKind detector_kind_from_name(const std::string& name) {
  if (name == "hotword") return DetectorKind::Hotword;
  if (name == "lm-audio") return DetectorKind::LmAudio;
  if (name == "lm-text") return DetectorKind::LmText;
  if (name == "classifier") return DetectorKind::Classifier;
  throw ValidationError("unknown detector \"" + name +
                        "\" (expected hotword, lm-audio, lm-text or classifier)");
}

std::string detector_kind_name(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Hotword: return "hotword";
    case DetectorKind::LmAudio: return "lm-audio";
    case DetectorKind::LmText: return "lm-text";
    case DetectorKind::Classifier: return "classifier";
  }
  return "?";
}

// --- ModelClient -------------------------------------------------------------

struct ModelClient::Impl {
  std::string endpoint;
  double timeout_s;
  int max_retries;
  int backoff_ms;
  std::unique_ptr<httplib::Client> http;

  Impl(const std::string& ep, double timeout, int retries, int backoff)
      : endpoint(ep), timeout_s(timeout), max_retries(retries), backoff_ms(backoff) {
    if (endpoint.empty()) throw ValidationError("detector endpoint is empty");
    http = std::make_unique<httplib::Client>(endpoint);
    auto sec = static_cast<time_t>(timeout_s);
    auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
    http->set_connection_timeout(sec, usec);
    http->set_read_timeout(sec, usec);
    http->set_write_timeout(sec, usec);
  }

  json post(const std::string& path, const json& body) {
    const std::string payload = body.dump();
    int backoff = backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
      }
      auto res = http->Post(path, payload, "application/json");
      if (!res) {
        last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300)
        throw TransportError("endpoint " + endpoint + path + " returned status " +
                             std::to_string(res->status) + ": " + res->body);
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw TransportError("malformed response from " + endpoint + path + ": " + e.what());
      }
    }
    throw TransportError("endpoint " + endpoint + path + " unreachable after " +
                         std::to_string(max_retries + 1) + " attempts: " + last_error);
  }
};

ModelClient::ModelClient(const std::string& endpoint, double timeout_s, int max_retries,
                         int backoff_ms)
    : impl_(std::make_unique<Impl>(endpoint, timeout_s, max_retries, backoff_ms)) {}
ModelClient::~ModelClient() = default;
ModelClient::ModelClient(ModelClient&&) noexcept = default;
ModelClient& ModelClient::operator=(ModelClient&&) noexcept = default;

std::string ModelClient::transcribe(const WindowInput& window) {
  json body{{"audio_b64", window_audio_b64(window)}, {"meta", window_meta(window)}};
  json res = impl_->post("/v1/transcribe", body);
  if (!res.contains("transcript") || !res["transcript"].is_string())
    throw TransportError("transcribe response missing \"transcript\"");
  return res["transcript"].get<std::string>();
}

std::pair<double, double> ModelClient::logprobs(const PromptPayload& prompt,
                                                const WindowInput& target) {
  json segments = json::array();
  for (const auto& seg : prompt.segments) {
    json s{{"audio_b64", seg.audio_b64}};
    if (seg.label)
      s["label"] = *seg.label;
    else
      s["label"] = nullptr;
    segments.push_back(std::move(s));
  }
  json body{{"prompt", prompt.text}, {"segments", std::move(segments)},
            {"meta", window_meta(target)}};
  json res = impl_->post("/v1/logprobs", body);
  if (!res.contains("logprob_p") || !res.contains("logprob_n") ||
      !res["logprob_p"].is_number() || !res["logprob_n"].is_number())
    throw TransportError("logprobs response missing \"logprob_p\"/\"logprob_n\"");
  return {res["logprob_p"].get<double>(), res["logprob_n"].get<double>()};
}

double ModelClient::classify(const WindowInput& window) {
  json body{{"audio_b64", window_audio_b64(window)}, {"meta", window_meta(window)}};
  json res = impl_->post("/v1/classify", body);
  if (!res.contains("probability") || !res["probability"].is_number())
    throw TransportError("classify response missing \"probability\"");
  double p = res["probability"].get<double>();
  if (p < 0.0 || p > 1.0)
    throw TransportError("classify probability " + std::to_string(p) + " outside [0, 1]");
  return p;
}

Score score_window(const DetectorConfig& config, const WindowInput& window,
                   const FewShotSet& fewshot, ModelClient& client) {
  switch (config.kind) {
    case DetectorKind::Hotword: {
      std::string transcript =
          window.transcript ? *window.transcript : client.transcribe(window);
      return detect_hotword(transcript, config.lexicon);
    }
    case DetectorKind::LmAudio: {
      PromptPayload prompt = build_prompt(config.audio_template, fewshot, window);
      auto [lp_p, lp_n] = client.logprobs(prompt, window);
      return pn_probability(lp_p, lp_n);
    }
    case DetectorKind::LmText: {
      WindowInput target = window;
      if (!target.transcript) target.transcript = client.transcribe(window);
      PromptPayload prompt = build_prompt(config.text_template, fewshot, target);
      auto [lp_p, lp_n] = client.logprobs(prompt, target);
      return pn_probability(lp_p, lp_n);
    }
    case DetectorKind::Classifier:
      return client.classify(window);
  }
  throw ValidationError("unknown detector kind");
}

Score score_window(const DetectorConfig& config, const WindowInput& window,
                   const FewShotSet& fewshot) {
  if (config.kind == DetectorKind::Hotword && window.transcript)
    return detect_hotword(*window.transcript, config.lexicon);  // no endpoint needed
  ModelClient client(config.endpoint, config.timeout_s, config.max_retries, config.backoff_ms);
  return score_window(config, window, fewshot, client);
}

std::vector<Score> score_windows(const DetectorConfig& config,
                                 const std::vector<WindowInput>& windows,
                                 const FewShotSet& fewshot) {
  std::vector<Score> scores(windows.size(), 0.0);
  if (windows.empty()) return scores;

  const int n_workers =
      std::max(1, std::min<int>(config.in_flight, static_cast<int>(windows.size())));
  if (n_workers == 1) {
    if (config.kind == DetectorKind::Hotword &&
        std::all_of(windows.begin(), windows.end(),
                    [](const WindowInput& w) { return w.transcript.has_value(); })) {
      for (std::size_t i = 0; i < windows.size(); ++i)
        scores[i] = detect_hotword(*windows[i].transcript, config.lexicon);
      return scores;
    }
    ModelClient client(config.endpoint, config.timeout_s, config.max_retries, config.backoff_ms);
    for (std::size_t i = 0; i < windows.size(); ++i)
      scores[i] = score_window(config, windows[i], fewshot, client);
    return scores;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) {
    workers.emplace_back([&]() {
      try {
        ModelClient client(config.endpoint, config.timeout_s, config.max_retries,
                           config.backoff_ms);
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= windows.size() || failed.load()) return;
          scores[i] = score_window(config, windows[i], fewshot, client);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) error_msg = e.what();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failed.load()) throw TransportError(error_msg);
  return scores;
}

}  // namespace hdm::detect
