#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hdm/corpus.hpp"

namespace hdm::mock {

// A scoring window located in a conversation; the ground truth the mock
// answers from.
struct WindowRef {
  std::string conversation_id;
  double t_s = 0.0;
  double context_start_s = 0.0;
};

// Maps audio fingerprints (FNV-1a of the request WAV bytes) to windows, for
// clients that do not send metadata. Built at dataset-build time.
struct WindowRegistry {
  std::map<std::uint64_t, WindowRef> by_fingerprint;
};

WindowRegistry parse_registry_file(const std::string& path);
void write_registry_file(const WindowRegistry& registry, const std::string& path);

struct MockConfig {
  corpus::Corpus corpus;
  std::vector<corpus::HdmEvent> events;
  WindowRegistry registry;
  double word_drop_prob = 0.0;     // per-word transcript corruption
  double score_noise_sigma = 0.0;  // gaussian noise on the oracle probability
  double miscalibration_bias = 0.0;
  std::uint64_t seed = 0;
  int port = 8091;
};

// Deterministic stand-in for the transcription / logprobs / classify
// endpoints. All handler state is read-only after construction; per-request
// randomness is derived statelessly from (seed, window id).
class MockService {
 public:
  explicit MockService(MockConfig config);
  ~MockService();

  // In-process request handling (also used by the HTTP layer).
  // Returns (status, body-json-string).
  std::pair<int, std::string> handle_transcribe(const std::string& body) const;
  std::pair<int, std::string> handle_logprobs(const std::string& body) const;
  std::pair<int, std::string> handle_classify(const std::string& body) const;

  // Oracle probability for a located window, after noise/bias/clamp.
  double emitted_probability(const WindowRef& window) const;
  std::string ground_truth_transcript(const WindowRef& window) const;

  // Serve until stop(); bind to config.port, or an ephemeral port when
  // config.port == 0. Returns the bound port once listening.
  int start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hdm::mock
