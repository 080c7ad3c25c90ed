#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "hdm/base64.hpp"
#include "hdm/detectors.hpp"
#include "hdm/error.hpp"
#include "hdm/mocksvc.hpp"
#include "test_helpers.hpp"

using namespace hdm;
using json = nlohmann::json;

namespace {

mock::MockConfig base_config() {
  mock::MockConfig cfg;
  corpus::Conversation conv;
  conv.id = "c1";
  conv.sample_rate_hz = 16000;
  conv.duration_s = 30.0;
  conv.utterances.push_back({"A", 1.0, 3.0, "the meeting starts soon", "statement"});
  conv.utterances.push_back({"B", 10.0, 10.6, "Huh?", "signal-non-understanding"});
  conv.utterances.push_back({"A", 12.0, 14.0, "we will begin with the agenda", "statement"});
  cfg.corpus.conversations.push_back(std::move(conv));
  cfg.events.push_back({"c1", 10.0, 10.6});
  cfg.port = 0;
  cfg.seed = 7;
  return cfg;
}

std::string meta_request(double t_s, double context_start_s) {
  json j{{"audio_b64", ""},
         {"meta",
          {{"conversation_id", "c1"}, {"t_s", t_s}, {"context_start_s", context_start_s}}}};
  return j.dump();
}

}  // namespace

TEST_CASE("mock transcribe returns ground-truth text overlapping the window") {
  mock::MockService svc(base_config());

  SUBCASE("window over both utterances concatenates them") {
    auto [status, body] = svc.handle_transcribe(meta_request(10.5, 2.5));
    CHECK(status == 200);
    CHECK(json::parse(body)["transcript"] == "the meeting starts soon Huh?");
  }

  SUBCASE("window over silence is empty") {
    auto [status, body] = svc.handle_transcribe(meta_request(8.0, 4.0));
    CHECK(status == 200);
    CHECK(json::parse(body)["transcript"] == "");
  }

  SUBCASE("unknown conversation is a 404") {
    json j{{"audio_b64", ""}, {"meta", {{"conversation_id", "nope"}, {"t_s", 5.0}}}};
    auto [status, body] = svc.handle_transcribe(j.dump());
    CHECK(status == 404);
    CHECK(json::parse(body).contains("error"));
  }
}

TEST_CASE("mock word dropping") {
  SUBCASE("probability 1 empties the transcript") {
    auto cfg = base_config();
    cfg.word_drop_prob = 1.0;
    mock::MockService svc(std::move(cfg));
    auto [status, body] = svc.handle_transcribe(meta_request(10.5, 2.5));
    CHECK(json::parse(body)["transcript"] == "");
  }

  SUBCASE("drop rate approaches the configured probability") {
    auto cfg = base_config();
    cfg.word_drop_prob = 0.3;
    // one long utterance with many words
    auto& conv = cfg.corpus.conversations[0];
    std::string text;
    for (int i = 0; i < 10000; ++i) text += "w" + std::to_string(i) + " ";
    conv.utterances[0] = {"A", 1.0, 3.0, text, "statement"};
    mock::MockService svc(std::move(cfg));
    auto [status, body] = svc.handle_transcribe(meta_request(10.5, 0.5));
    std::string out = json::parse(body)["transcript"];
    std::size_t kept = out.empty() ? 0 : 1;
    for (char c : out) kept += c == ' ';
    double droppedFraction = 1.0 - static_cast<double>(kept) / 10001.0;
    CHECK(droppedFraction > 0.28);
    CHECK(droppedFraction < 0.32);
  }

  SUBCASE("same request twice gives identical bytes") {
    auto cfg = base_config();
    cfg.word_drop_prob = 0.5;
    mock::MockService svc(std::move(cfg));
    auto r1 = svc.handle_transcribe(meta_request(10.5, 2.5));
    auto r2 = svc.handle_transcribe(meta_request(10.5, 2.5));
    CHECK(r1.second == r2.second);
  }
}

TEST_CASE("mock logprobs oracle") {
  mock::MockService svc(base_config());

  SUBCASE("positive window: p clamps to 0.999") {
    json j{{"prompt", "p"},
           {"segments", json::array()},
           {"meta", {{"conversation_id", "c1"}, {"t_s", 10.3}}}};
    auto [status, body] = svc.handle_logprobs(j.dump());
    REQUIRE(status == 200);
    json res = json::parse(body);
    CHECK(res["logprob_p"].get<double>() == doctest::Approx(std::log(0.999)).epsilon(1e-12));
    // round-trip through the client-side softmax restores p
    double p = detect::pn_probability(res["logprob_p"].get<double>(),
                                      res["logprob_n"].get<double>());
    CHECK(p == doctest::Approx(0.999).epsilon(1e-9));
  }

  SUBCASE("negative window: p clamps to 0.001") {
    json j{{"prompt", "p"},
           {"segments", json::array()},
           {"meta", {{"conversation_id", "c1"}, {"t_s", 5.0}}}};
    auto [status, body] = svc.handle_logprobs(j.dump());
    json res = json::parse(body);
    CHECK(res["logprob_p"].get<double>() == doctest::Approx(std::log(0.001)).epsilon(1e-12));
  }

  SUBCASE("event end counts as inside (fallback positives must score 1)") {
    json j{{"prompt", "p"},
           {"segments", json::array()},
           {"meta", {{"conversation_id", "c1"}, {"t_s", 10.6}}}};
    auto [status, body] = svc.handle_logprobs(j.dump());
    json res = json::parse(body);
    CHECK(res["logprob_p"].get<double>() == doctest::Approx(std::log(0.999)));
  }

  SUBCASE("noise and bias shift the emitted probability deterministically") {
    auto cfg = base_config();
    cfg.score_noise_sigma = 0.2;
    cfg.miscalibration_bias = 0.1;
    mock::MockService svc2(std::move(cfg));
    mock::WindowRef ref{"c1", 5.0, 1.0};
    double p1 = svc2.emitted_probability(ref);
    double p2 = svc2.emitted_probability(ref);
    CHECK(p1 == p2);
    CHECK(p1 >= 0.001);
    CHECK(p1 <= 0.999);
  }
}

TEST_CASE("mock classify mirrors the logprobs oracle") {
  mock::MockService svc(base_config());
  json pos{{"audio_b64", ""}, {"meta", {{"conversation_id", "c1"}, {"t_s", 10.2}}}};
  auto [s1, b1] = svc.handle_classify(pos.dump());
  CHECK(json::parse(b1)["probability"].get<double>() == doctest::Approx(0.999));
  json negq{{"audio_b64", ""}, {"meta", {{"conversation_id", "c1"}, {"t_s", 20.0}}}};
  auto [s2, b2] = svc.handle_classify(negq.dump());
  CHECK(json::parse(b2)["probability"].get<double>() == doctest::Approx(0.001));
}

TEST_CASE("registry fingerprint routing without metadata") {
  auto cfg = base_config();
  audio::Waveform window_audio = testing::sine(440.0, 4.0);
  std::string wav = audio::write_wav(window_audio, audio::WavFormat::Pcm16);
  cfg.registry.by_fingerprint[fnv1a64(wav)] = {"c1", 10.2, 6.2};
  mock::MockService svc(std::move(cfg));

  json j{{"audio_b64", base64_encode(wav)}};
  auto [status, body] = svc.handle_classify(j.dump());
  REQUIRE(status == 200);
  CHECK(json::parse(body)["probability"].get<double>() == doctest::Approx(0.999));

  SUBCASE("unregistered audio is a 404") {
    std::string other = audio::write_wav(testing::sine(313.0, 4.0), audio::WavFormat::Pcm16);
    json j2{{"audio_b64", base64_encode(other)}};
    CHECK(svc.handle_classify(j2.dump()).first == 404);
  }
}

TEST_CASE("registry file round-trip") {
  mock::WindowRegistry reg;
  reg.by_fingerprint[0x1234abcdULL] = {"c1", 10.25, 6.25};
  reg.by_fingerprint[0xffeeddccbbaa0099ULL] = {"c2", 8.0, 4.0};
  std::string path = "/tmp/hdm_test_registry.json";
  mock::write_registry_file(reg, path);
  mock::WindowRegistry back = mock::parse_registry_file(path);
  REQUIRE(back.by_fingerprint.size() == 2);
  CHECK(back.by_fingerprint.at(0x1234abcdULL).conversation_id == "c1");
  CHECK(back.by_fingerprint.at(0x1234abcdULL).t_s == doctest::Approx(10.25));
}

TEST_CASE("mock service over HTTP with the real client") {
  mock::MockService svc(base_config());
  int port = svc.start();
  REQUIRE(port > 0);

  detect::ModelClient client("http://127.0.0.1:" + std::to_string(port), 5.0, 1, 10);

  detect::WindowInput window;
  window.waveform = testing::sine(440.0, 4.0);
  window.end_time_s = 10.3;
  window.conversation_id = "c1";

  SUBCASE("transcribe over the wire") {
    std::string transcript = client.transcribe(window);
    CHECK(transcript.find("Huh?") != std::string::npos);
  }

  SUBCASE("logprobs over the wire through score_window") {
    detect::DetectorConfig cfg;
    cfg.kind = detect::DetectorKind::LmAudio;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    double score = detect::score_window(cfg, window, {}, client);
    CHECK(score == doctest::Approx(0.999).epsilon(1e-9));
  }

  SUBCASE("classifier detector over the wire") {
    detect::DetectorConfig cfg;
    cfg.kind = detect::DetectorKind::Classifier;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    detect::WindowInput negw = window;
    negw.end_time_s = 20.0;
    CHECK(detect::score_window(cfg, negw, {}, client) == doctest::Approx(0.001));
  }

  SUBCASE("hotword detector with mock transcription") {
    detect::DetectorConfig cfg;
    cfg.kind = detect::DetectorKind::Hotword;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    CHECK(detect::score_window(cfg, window, {}, client) == 1.0);
  }

  SUBCASE("lm-text detector: transcribe then prompt") {
    detect::DetectorConfig cfg;
    cfg.kind = detect::DetectorKind::LmText;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    CHECK(detect::score_window(cfg, window, {}, client) == doctest::Approx(0.999));
    detect::WindowInput negw = window;
    negw.end_time_s = 20.0;
    CHECK(detect::score_window(cfg, negw, {}, client) == doctest::Approx(0.001));
  }

  SUBCASE("score_windows preserves order under concurrency") {
    detect::DetectorConfig cfg;
    cfg.kind = detect::DetectorKind::Classifier;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.in_flight = 4;
    std::vector<detect::WindowInput> windows;
    for (int i = 0; i < 40; ++i) {
      detect::WindowInput w = window;
      w.end_time_s = (i % 2 == 0) ? 10.3 : 20.0;  // alternate positive/negative
      windows.push_back(w);
    }
    auto scores = detect::score_windows(cfg, windows);
    REQUIRE(scores.size() == 40);
    for (int i = 0; i < 40; ++i)
      CHECK(scores[static_cast<std::size_t>(i)] ==
            doctest::Approx(i % 2 == 0 ? 0.999 : 0.001));
  }

  svc.stop();
}
