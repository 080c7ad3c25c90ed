#include "hdm/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "hdm/error.hpp"

using json = nlohmann::json;

namespace hdm::timeline {

namespace {

bool overlaps(double a0, double a1, double b0, double b1) {
  return std::max(a0, b0) < std::min(a1, b1);
}

ExampleSpec make_spec(const std::string& cid, double t, Label label, double context_s,
                      bool short_fallback = false) {
  ExampleSpec s;
  s.conversation_id = cid;
  s.t_s = t;
  s.label = label;
  s.context_start_s = t - context_s;
  s.context_end_s = t;
  s.short_event_fallback = short_fallback;
  return s;
}

}  // namespace

std::size_t Dataset::positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(),
                    [](const ExampleSpec& e) { return e.label == Label::Positive; }));
}

std::size_t Dataset::negative_count() const { return examples.size() - positive_count(); }

FrameTimeline propagate_labels(const std::vector<HdmEvent>& events, double duration_s,
                               int frame_ms) {
  if (frame_ms <= 0) throw ValidationError("frame_ms must be positive");
  if (duration_s < 0) throw ValidationError("duration_s must be non-negative");
  for (const auto& e : events) {
    if (e.start_s < 0 || e.end_s > duration_s)
      throw ValidationError("event [" + std::to_string(e.start_s) + ", " + std::to_string(e.end_s) +
                            ") outside [0, duration]");
  }

  FrameTimeline tl;
  tl.frame_ms = frame_ms;
  auto n_frames =
      static_cast<Eigen::Index>(std::ceil(duration_s * 1000.0 / static_cast<double>(frame_ms)));
  tl.labels = LabelArray::Constant(n_frames, false);

  const double frame_s = frame_ms / 1000.0;
  for (const auto& e : events) {
    auto first = static_cast<Eigen::Index>(std::floor(e.start_s / frame_s));
    auto last = static_cast<Eigen::Index>(std::ceil(e.end_s / frame_s));
    for (Eigen::Index i = std::max<Eigen::Index>(first, 0); i < std::min(last, n_frames); ++i) {
      double f0 = static_cast<double>(i) * frame_s;
      if (overlaps(f0, f0 + frame_s, e.start_s, e.end_s)) tl.labels[i] = true;
    }
  }
  return tl;
}

PositiveSamples sample_positive_timesteps(const std::vector<HdmEvent>& events,
                                          const SamplingConfig& config, Rng& rng) {
  PositiveSamples out;
  for (const auto& e : events) {
    const double duration = e.end_s - e.start_s;
    double t;
    bool short_fallback = false;
    if (duration >= config.min_elapsed_s) {
      double lo = e.start_s + config.min_elapsed_s;
      // keep the context inside the audio: raise the draw floor to context_s
      if (e.end_s < config.context_s) {
        out.dropped_short_context++;
        continue;
      }
      lo = std::max(lo, config.context_s);
      t = rng.uniform(lo, e.end_s);
    } else {
      short_fallback = true;
      t = e.end_s;
      if (t < config.context_s) {
        out.dropped_short_context++;
        continue;
      }
    }
    out.specs.push_back(
        make_spec(e.conversation_id, t, Label::Positive, config.context_s, short_fallback));
  }
  return out;
}

std::vector<ExampleSpec> sample_negative_timesteps(const std::vector<HdmEvent>& events,
                                                   const std::string& conversation_id,
                                                   double duration_s, std::size_t count,
                                                   const SamplingConfig& config, Rng& rng) {
  std::vector<ExampleSpec> specs;
  if (count == 0) return specs;
  if (duration_s < config.context_s)
    throw RuntimeError("conversation " + conversation_id + " shorter than the context window");

  const std::size_t max_attempts = 10000 * count;
  std::size_t attempts = 0;
  while (specs.size() < count && attempts < max_attempts) {
    ++attempts;
    double t = rng.uniform(config.context_s, duration_s);
    bool clear = true;
    for (const auto& e : events) {
      if (overlaps(t - config.context_s, t, e.start_s, e.end_s)) {
        clear = false;
        break;
      }
    }
    if (clear)
      specs.push_back(make_spec(conversation_id, t, Label::Negative, config.context_s));
  }
  if (specs.size() < count) {
    std::ostringstream msg;
    msg << "negative sampling infeasible for conversation " << conversation_id << ": "
        << specs.size() << "/" << count << " accepted after " << attempts
        << " attempts (feasible mass estimate "
        << static_cast<double>(specs.size()) / static_cast<double>(attempts) << ")";
    throw RuntimeError(msg.str());
  }
  return specs;
}

Dataset build_dataset(const Corpus& corpus, const std::vector<HdmEvent>& events,
                      const SamplingConfig& config) {
  if (config.neg_ratio < 1) throw ValidationError("neg_ratio must be >= 1");
  if (!(config.context_s > 0)) throw ValidationError("context_s must be positive");
  if (config.min_elapsed_s < 0) throw ValidationError("min_elapsed_s must be non-negative");

  std::map<std::string, std::vector<HdmEvent>> by_conv;
  for (const auto& e : events) {
    const auto* conv = corpus.find(e.conversation_id);
    if (!conv)
      throw ValidationError("event references unknown conversation \"" + e.conversation_id + "\"");
    if (e.start_s < 0 || e.end_s > conv->duration_s)
      throw ValidationError("event outside conversation " + e.conversation_id);
    by_conv[e.conversation_id].push_back(e);
  }

  Dataset ds;
  ds.config = config;
  ds.corpus_fingerprint = corpus::corpus_fingerprint(corpus);

  std::vector<ExampleSpec> positives, negatives;
  // iterate in corpus order so output order is stable
  for (const auto& conv : corpus.conversations) {
    auto it = by_conv.find(conv.id);
    if (it == by_conv.end()) continue;
    Rng pos_rng = Rng::split(config.seed, "pos:" + conv.id);
    PositiveSamples pos = sample_positive_timesteps(it->second, config, pos_rng);
    ds.dropped_short_context += pos.dropped_short_context;
    if (pos.specs.empty()) continue;

    Rng neg_rng = Rng::split(config.seed, "neg:" + conv.id);
    auto negs = sample_negative_timesteps(it->second, conv.id, conv.duration_s,
                                          pos.specs.size() * config.neg_ratio, config, neg_rng);
    positives.insert(positives.end(), pos.specs.begin(), pos.specs.end());
    negatives.insert(negatives.end(), negs.begin(), negs.end());
  }

  ds.examples = std::move(positives);
  ds.examples.insert(ds.examples.end(), negatives.begin(), negatives.end());
  return ds;
}

std::vector<std::vector<ExampleSpec>> balanced_batches(const Dataset& dataset,
                                                       std::size_t batch_size, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ValidationError("batch_size must be even and >= 2");
  std::vector<const ExampleSpec*> pos, neg;
  for (const auto& e : dataset.examples)
    (e.label == Label::Positive ? pos : neg).push_back(&e);
  if (pos.empty()) throw ValidationError("dataset has no positive examples");

  rng.shuffle(pos);
  rng.shuffle(neg);

  const std::size_t half = batch_size / 2;
  const std::size_t n_batches = neg.size() / half;
  std::vector<std::vector<ExampleSpec>> batches;
  batches.reserve(n_batches);
  std::size_t pi = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<ExampleSpec> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < half; ++i) {
      batch.push_back(*pos[pi]);
      if (++pi == pos.size()) {
        pi = 0;
        rng.shuffle(pos);  // reshuffle each cycle through the positives
      }
    }
    for (std::size_t i = 0; i < half; ++i) batch.push_back(*neg[b * half + i]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& e : dataset.examples) {
    json j{{"conversation_id", e.conversation_id},
           {"t_s", e.t_s},
           {"label", e.label == Label::Positive ? "positive" : "negative"},
           {"context_start_s", e.context_start_s},
           {"context_end_s", e.context_end_s}};
    if (e.short_event_fallback) j["short_event"] = true;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::istream& input) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      ExampleSpec e;
      e.conversation_id = j.at("conversation_id").get<std::string>();
      e.t_s = j.at("t_s").get<double>();
      std::string label = j.at("label").get<std::string>();
      if (label == "positive")
        e.label = Label::Positive;
      else if (label == "negative")
        e.label = Label::Negative;
      else
        throw ValidationError("dataset line " + std::to_string(line_no) + ": bad label \"" + label +
                              "\"");
      e.context_start_s = j.at("context_start_s").get<double>();
      e.context_end_s = j.at("context_end_s").get<double>();
      e.short_event_fallback = j.value("short_event", false);
      ds.examples.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ValidationError("dataset line " + std::to_string(line_no) + ": malformed record: " +
                            ex.what());
    }
  }
  return ds;
}

Dataset parse_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open dataset file: " + path);
  return parse_dataset(in);
}

void write_dataset_file(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write dataset file: " + path);
  out << serialize_dataset(dataset);
}

}  // namespace hdm::timeline
