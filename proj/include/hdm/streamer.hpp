#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hdm/audio.hpp"
#include "hdm/corpus.hpp"
#include "hdm/detectors.hpp"

namespace hdm::stream {

struct SignalPoint {
  double t_s = 0.0;
  detect::Score score = 0.0;
};

// Continuous detector output: one score per window end, hop_ms apart.
struct Signal {
  std::vector<SignalPoint> points;
  double window_s = 4.0;
  int hop_ms = 1000;
  std::vector<corpus::HdmEvent> ground_truth;  // optional, for CSV/plots
};

// Score windows ending at t = window_s, window_s + hop, ... <= duration.
// No left padding: the signal starts once a full context exists.
Signal stream_scores(const audio::Waveform& waveform, const detect::DetectorConfig& detector,
                     double window_s = 4.0, int hop_ms = 1000,
                     const std::optional<std::string>& conversation_id = std::nullopt,
                     const detect::FewShotSet& fewshot = {});

// header t_s,score,ground_truth; ground_truth empty when no events supplied.
std::string export_signal_csv(const Signal& signal);
Signal parse_signal_csv(const std::string& bytes);

// Standalone SVG: shaded event rectangles, score polyline, 1 s axis ticks.
std::string render_plot_svg(const Signal& signal);

}  // namespace hdm::stream
