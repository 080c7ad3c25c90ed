#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "hdm/detectors.hpp"
#include "hdm/error.hpp"
#include "test_helpers.hpp"

using namespace hdm;
using namespace hdm::detect;

namespace {

std::vector<timeline::ExampleSpec> fake_examples(int positives, int negatives) {
  std::vector<timeline::ExampleSpec> out;
  for (int i = 0; i < positives; ++i) {
    timeline::ExampleSpec e;
    e.conversation_id = "c" + std::to_string(i);
    e.t_s = 10.0 + i;
    e.label = timeline::Label::Positive;
    e.context_start_s = e.t_s - 4.0;
    e.context_end_s = e.t_s;
    out.push_back(e);
  }
  for (int i = 0; i < negatives; ++i) {
    timeline::ExampleSpec e;
    e.conversation_id = "n" + std::to_string(i);
    e.t_s = 20.0 + i;
    e.label = timeline::Label::Negative;
    e.context_start_s = e.t_s - 4.0;
    e.context_end_s = e.t_s;
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("detect_hotword") {
  HotwordLexicon lex = default_lexicon();

  CHECK(detect_hotword("Huh?", lex) == 1.0);
  CHECK(detect_hotword("the weather is nice today", lex) == 0.0);
  CHECK(detect_hotword("Can you REPEAT that, please", lex) == 1.0);
  CHECK(detect_hotword("", lex) == 0.0);

  SUBCASE("case and punctuation do not matter") {
    CHECK(detect_hotword("WHAT", lex) == 1.0);
    CHECK(detect_hotword("...what!!!", lex) == 1.0);
    CHECK(detect_hotword("so, sorry; about that", lex) == 1.0);
  }

  SUBCASE("phrases must appear as a consecutive run") {
    HotwordLexicon strict;
    strict.phrases = {"can you repeat that"};
    CHECK(detect_hotword("can you please repeat that", strict) == 0.0);
    CHECK(detect_hotword("i said can you repeat that already", strict) == 1.0);
  }

  SUBCASE("substrings of words do not fire") {
    HotwordLexicon lex2;
    lex2.phrases = {"what"};
    CHECK(detect_hotword("whatever you say", lex2) == 0.0);
  }

  SUBCASE("lexicon validation") {
    HotwordLexicon bad;
    CHECK_THROWS_AS(validate_lexicon(bad), ValidationError);
    bad.phrases = {"one two three four five six seven"};
    CHECK_THROWS_AS(validate_lexicon(bad), ValidationError);
  }

  SUBCASE("lexicon file parsing skips comments") {
    std::istringstream in("# difficulty phrases\nwhat\npardon\n\n");
    HotwordLexicon parsed = parse_lexicon(in);
    REQUIRE(parsed.phrases.size() == 2);
    CHECK(detect_hotword("pardon me", parsed) == 1.0);
  }
}

TEST_CASE("hotword invariance property: random case flips and punctuation") {
  HotwordLexicon lex = default_lexicon();
  Rng rng(17);
  const std::string base = "could you say it again sorry i missed it";
  const std::string punct = ".,;:!?\"'()-";
  for (int trial = 0; trial < 50; ++trial) {
    std::string mutated;
    for (char c : base) {
      if (c == ' ' && rng.coin(0.3)) {
        mutated += punct[static_cast<std::size_t>(rng.uniform_int(0, punct.size() - 1))];
        mutated += ' ';
        continue;
      }
      mutated += rng.coin(0.5) ? static_cast<char>(std::toupper(c)) : c;
    }
    CHECK(detect_hotword(mutated, lex) == 1.0);
  }
}

TEST_CASE("assemble_fewshot") {
  auto examples = fake_examples(8, 40);

  SUBCASE("k=10 gives 5 P and 5 N") {
    Rng rng(3);
    FewShotSet set = assemble_fewshot(examples, 10, rng);
    REQUIRE(set.examples.size() == 10);
    int pos = 0;
    for (const auto& e : set.examples) pos += e.positive;
    CHECK(pos == 5);
  }

  SUBCASE("k=2 gives 1 P and 1 N") {
    Rng rng(3);
    FewShotSet set = assemble_fewshot(examples, 2, rng);
    REQUIRE(set.examples.size() == 2);
    int pos = 0;
    for (const auto& e : set.examples) pos += e.positive;
    CHECK(pos == 1);
  }

  SUBCASE("k=0 is the zero-shot empty set") {
    Rng rng(3);
    CHECK(assemble_fewshot(examples, 0, rng).examples.empty());
  }

  SUBCASE("odd k and insufficient examples are rejected") {
    Rng rng(3);
    CHECK_THROWS_AS(assemble_fewshot(examples, 3, rng), ValidationError);
    CHECK_THROWS_AS(assemble_fewshot(examples, 18, rng), ValidationError);
  }

  SUBCASE("draw is without replacement and seed-reproducible") {
    Rng a(5), b(5);
    FewShotSet s1 = assemble_fewshot(examples, 10, a);
    FewShotSet s2 = assemble_fewshot(examples, 10, b);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < s1.examples.size(); ++i) {
      CHECK(s1.examples[i].spec.conversation_id == s2.examples[i].spec.conversation_id);
      ids.insert(s1.examples[i].spec.conversation_id);
    }
    CHECK(ids.size() == 10);
  }
}

TEST_CASE("build_prompt") {
  WindowInput target;
  target.waveform = testing::sine(440.0, 4.0);
  target.end_time_s = 10.0;

  SUBCASE("0-shot audio: instruction plus one unlabeled block") {
    PromptPayload p = build_prompt(default_audio_template(), {}, target);
    REQUIRE(p.segments.size() == 1);
    CHECK_FALSE(p.segments[0].label.has_value());
    CHECK(p.text.find("Audio: [audio segment 1], Label: ") != std::string::npos);
    CHECK(p.text.rfind("Label: ") == p.text.size() - 7);
  }

  SUBCASE("2-shot: two labeled blocks before the target, target last") {
    Rng rng(1);
    FewShotSet set = assemble_fewshot(fake_examples(2, 2), 2, rng);
    for (auto& e : set.examples) e.waveform = testing::sine(300.0, 4.0);
    PromptPayload p = build_prompt(default_audio_template(), set, target);
    REQUIRE(p.segments.size() == 3);
    CHECK(p.segments[0].label.has_value());
    CHECK(p.segments[1].label.has_value());
    CHECK_FALSE(p.segments[2].label.has_value());
  }

  SUBCASE("block count is k+1 and target always last, for several k") {
    for (int k = 0; k <= 6; k += 2) {
      Rng rng(2);
      FewShotSet set = assemble_fewshot(fake_examples(4, 4), k, rng);
      for (auto& e : set.examples) e.waveform = testing::sine(300.0, 4.0);
      PromptPayload p = build_prompt(default_audio_template(), set, target);
      CHECK(p.segments.size() == static_cast<std::size_t>(k) + 1);
      for (std::size_t i = 0; i + 1 < p.segments.size(); ++i)
        CHECK(p.segments[i].label.has_value());
      CHECK_FALSE(p.segments.back().label.has_value());
    }
  }

  SUBCASE("text-only variant carries no audio segments") {
    WindowInput t2 = target;
    t2.transcript = "could you say it again";
    Rng rng(1);
    FewShotSet set = assemble_fewshot(fake_examples(2, 2), 2, rng);
    for (auto& e : set.examples) e.transcript = "some words";
    PromptPayload p = build_prompt(default_text_template(), set, t2);
    CHECK(p.segments.empty());
    CHECK(p.text.find("Transcript: could you say it again, Label: ") != std::string::npos);
    CHECK(p.text.find("Audio:") == std::string::npos);
  }

  SUBCASE("modality mismatch is rejected") {
    CHECK_THROWS_AS(build_prompt(default_text_template(), {}, target), ValidationError);
  }
}

TEST_CASE("prompt template validation") {
  CHECK_NOTHROW(validate_template(default_audio_template()));
  CHECK_NOTHROW(validate_template(default_text_template()));
  PromptTemplate bad{"listen to the audio", PromptVariant::TextOnly};
  CHECK_THROWS_AS(validate_template(bad), ValidationError);
  PromptTemplate no_lombard{"just answer P or N", PromptVariant::Audio};
  CHECK_THROWS_AS(validate_template(no_lombard), ValidationError);
}

TEST_CASE("pn_probability") {
  constexpr double inf = std::numeric_limits<double>::infinity();

  CHECK(pn_probability(-1.0, -1.0) == doctest::Approx(0.5).epsilon(1e-12));
  // frozen from a 40-digit softmax evaluation
  CHECK(pn_probability(-1.2, -2.3) == doctest::Approx(0.750260105595).epsilon(1e-9));
  CHECK(pn_probability(-inf, -0.5) == 0.0);
  CHECK(pn_probability(-0.5, -inf) == 1.0);
  CHECK_THROWS_WITH_AS(pn_probability(-inf, -inf), doctest::Contains("degenerate"),
                       ValidationError);

  SUBCASE("symmetry: p(a,b) + p(b,a) = 1") {
    Rng rng(23);
    for (int i = 0; i < 200; ++i) {
      double a = rng.uniform(-50.0, 0.0);
      double b = rng.uniform(-50.0, 0.0);
      CHECK(std::abs(pn_probability(a, b) + pn_probability(b, a) - 1.0) < 1e-12);
    }
  }

  SUBCASE("strictly increasing in logprob_p") {
    double prev = -1.0;
    for (double lp = -20.0; lp <= 0.0; lp += 0.25) {
      double p = pn_probability(lp, -5.0);
      CHECK(p > prev);
      prev = p;
    }
  }

  SUBCASE("numerically stable for large magnitudes") {
    CHECK(pn_probability(-1000.0, -1001.0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(std::isfinite(pn_probability(-1e308, -1e308)));
  }
}

TEST_CASE("score_window: offline hotword path needs no endpoint") {
  DetectorConfig cfg;
  cfg.kind = DetectorKind::Hotword;
  WindowInput window;
  window.waveform = testing::sine(440.0, 4.0);
  window.transcript = "sorry, could you speak up";
  CHECK(score_window(cfg, window) == 1.0);
}

TEST_CASE("score_window: unreachable endpoint fails after retries") {
  DetectorConfig cfg;
  cfg.kind = DetectorKind::Classifier;
  cfg.endpoint = "http://127.0.0.1:1";  // nothing listens here
  cfg.timeout_s = 0.2;
  cfg.max_retries = 2;
  cfg.backoff_ms = 1;
  WindowInput window;
  window.waveform = testing::sine(440.0, 0.5);
  CHECK_THROWS_AS(score_window(cfg, window), TransportError);
}
