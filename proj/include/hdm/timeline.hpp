#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hdm/corpus.hpp"
#include "hdm/rng.hpp"

namespace hdm::timeline {

using corpus::Corpus;
using corpus::HdmEvent;

using LabelArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct FrameTimeline {
  std::string conversation_id;
  int frame_ms = 100;
  LabelArray labels;  // one per frame, ceil(duration_s*1000/frame_ms) entries
};

struct SamplingConfig {
  double context_s = 4.0;      // context window length preceding t
  double min_elapsed_s = 0.4;  // event must have been running this long at t
  int neg_ratio = 10;          // negatives per positive
  int frame_ms = 100;
  std::uint64_t seed = 0;
};

enum class Label { Positive, Negative };

struct ExampleSpec {
  std::string conversation_id;
  double t_s = 0.0;  // decision timestep; context = [t_s - context_s, t_s)
  Label label = Label::Negative;
  double context_start_s = 0.0;
  double context_end_s = 0.0;  // == t_s
  bool short_event_fallback = false;  // positive from an event shorter than min_elapsed_s
};

struct Dataset {
  std::vector<ExampleSpec> examples;  // positives first, then negatives
  SamplingConfig config;
  std::uint64_t corpus_fingerprint = 0;
  std::size_t dropped_short_context = 0;  // positives lost to context > start of audio

  std::size_t positive_count() const;
  std::size_t negative_count() const;
};

struct PositiveSamples {
  std::vector<ExampleSpec> specs;
  std::size_t dropped_short_context = 0;
};

// Frame i is positive iff [i*frame_ms, (i+1)*frame_ms) overlaps any event
// with positive length.
FrameTimeline propagate_labels(const std::vector<HdmEvent>& events, double duration_s,
                               int frame_ms);

// One spec per usable event. t is uniform on [start+min_elapsed, end] when the
// event is long enough, else t = end (flagged). Events whose context would
// start before 0 are dropped and counted.
PositiveSamples sample_positive_timesteps(const std::vector<HdmEvent>& events,
                                          const SamplingConfig& config, Rng& rng);

// `count` negatives with t uniform over {t : [t-context, t) disjoint from all
// events, context <= t <= duration}. Rejection sampling; infeasible input is
// reported with the observed acceptance estimate.
std::vector<ExampleSpec> sample_negative_timesteps(const std::vector<HdmEvent>& events,
                                                   const std::string& conversation_id,
                                                   double duration_s, std::size_t count,
                                                   const SamplingConfig& config, Rng& rng);

// Positives from every usable event; per conversation, neg_ratio x that
// conversation's positive count negatives. Deterministic given config.seed.
Dataset build_dataset(const Corpus& corpus, const std::vector<HdmEvent>& events,
                      const SamplingConfig& config);

// Equal positive/negative batches: negatives consumed without replacement in
// one pass, positives cycled. floor(negatives / (batch_size/2)) batches.
std::vector<std::vector<ExampleSpec>> balanced_batches(const Dataset& dataset,
                                                       std::size_t batch_size, Rng& rng);

// Dataset file: JSONL, one example per line.
std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::istream& input);
Dataset parse_dataset_file(const std::string& path);
void write_dataset_file(const Dataset& dataset, const std::string& path);

}  // namespace hdm::timeline
