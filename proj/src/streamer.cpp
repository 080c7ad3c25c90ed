#include "hdm/streamer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hdm/error.hpp"

namespace hdm::stream {

namespace {

bool in_any_event(double t, const std::vector<corpus::HdmEvent>& events) {
  for (const auto& e : events)
    if (t >= e.start_s && t <= e.end_s) return true;
  return false;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

Signal stream_scores(const audio::Waveform& waveform, const detect::DetectorConfig& detector,
                     double window_s, int hop_ms,
                     const std::optional<std::string>& conversation_id,
                     const detect::FewShotSet& fewshot) {
  if (hop_ms <= 0) throw ValidationError("hop_ms must be positive");
  if (!(window_s > 0)) throw ValidationError("window_s must be positive");
  const double duration = waveform.duration_s();
  if (duration < window_s)
    throw ValidationError("audio (" + std::to_string(duration) +
                          " s) shorter than the scoring window (" + std::to_string(window_s) +
                          " s)");

  const double hop_s = hop_ms / 1000.0;
  const auto n_points =
      static_cast<std::size_t>(std::floor((duration - window_s) * 1000.0 / hop_ms)) + 1;

  std::vector<detect::WindowInput> windows;
  windows.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double t = window_s + static_cast<double>(i) * hop_s;
    detect::WindowInput w;
    w.waveform = audio::slice(waveform, t - window_s, t);
    w.end_time_s = t;
    w.conversation_id = conversation_id;
    windows.push_back(std::move(w));
  }

  auto scores = detect::score_windows(detector, windows, fewshot);

  Signal signal;
  signal.window_s = window_s;
  signal.hop_ms = hop_ms;
  signal.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i)
    signal.points.push_back({windows[i].end_time_s, scores[i]});
  return signal;
}

std::string export_signal_csv(const Signal& signal) {
  std::ostringstream out;
  out << "t_s,score,ground_truth\n";
  out.precision(17);
  for (const auto& p : signal.points) {
    out << p.t_s << ',' << p.score << ',';
    if (!signal.ground_truth.empty()) out << (in_any_event(p.t_s, signal.ground_truth) ? 1 : 0);
    out << '\n';
  }
  return out.str();
}

Signal parse_signal_csv(const std::string& bytes) {
  Signal signal;
  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_s,score", 0) != 0)
    throw ValidationError("signal CSV missing header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string t_str, score_str;
    if (!std::getline(row, t_str, ',') || !std::getline(row, score_str, ','))
      throw ValidationError("signal CSV line " + std::to_string(line_no) + " malformed");
    try {
      signal.points.push_back({std::stod(t_str), std::stod(score_str)});
    } catch (const std::exception&) {
      throw ValidationError("signal CSV line " + std::to_string(line_no) + " malformed");
    }
  }
  return signal;
}

std::string render_plot_svg(const Signal& signal) {
  if (signal.points.empty()) throw ValidationError("cannot plot an empty signal");

  const double t0 = signal.points.front().t_s - signal.window_s;
  const double t1 = signal.points.back().t_s;
  const double margin_left = 48, margin_right = 16, margin_top = 16, margin_bottom = 36;
  const double plot_w = 720, plot_h = 200;
  const double width = margin_left + plot_w + margin_right;
  const double height = margin_top + plot_h + margin_bottom;

  auto x_of = [&](double t) { return margin_left + (t - t0) / std::max(t1 - t0, 1e-9) * plot_w; };
  auto y_of = [&](double s) { return margin_top + (1.0 - s) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  // ground-truth intervals, clipped to the plotted range
  for (const auto& e : signal.ground_truth) {
    double a = std::max(e.start_s, t0), b = std::min(e.end_s, t1);
    if (a >= b) continue;
    svg << "<rect x=\"" << fmt(x_of(a)) << "\" y=\"" << fmt(margin_top) << "\" width=\""
        << fmt(x_of(b) - x_of(a)) << "\" height=\"" << fmt(plot_h)
        << "\" fill=\"#d62728\" fill-opacity=\"0.3\"/>\n";
  }

  // score polyline
  svg << "<polyline fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"1.5\" points=\"";
  for (const auto& p : signal.points) svg << fmt(x_of(p.t_s)) << ',' << fmt(y_of(p.score)) << ' ';
  svg << "\"/>\n";

  // axes
  svg << "<line x1=\"" << fmt(margin_left) << "\" y1=\"" << fmt(margin_top + plot_h) << "\" x2=\""
      << fmt(margin_left + plot_w) << "\" y2=\"" << fmt(margin_top + plot_h)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(margin_left) << "\" y1=\"" << fmt(margin_top) << "\" x2=\""
      << fmt(margin_left) << "\" y2=\"" << fmt(margin_top + plot_h) << "\" stroke=\"black\"/>\n";

  // one tick per second on the time axis
  for (double t = std::ceil(t0); t <= t1 + 1e-9; t += 1.0) {
    svg << "<line x1=\"" << fmt(x_of(t)) << "\" y1=\"" << fmt(margin_top + plot_h) << "\" x2=\""
        << fmt(x_of(t)) << "\" y2=\"" << fmt(margin_top + plot_h + 5) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt(x_of(t)) << "\" y=\"" << fmt(margin_top + plot_h + 18)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  for (double s = 0.0; s <= 1.0 + 1e-9; s += 0.25) {
    svg << "<line x1=\"" << fmt(margin_left - 4) << "\" y1=\"" << fmt(y_of(s)) << "\" x2=\""
        << fmt(margin_left) << "\" y2=\"" << fmt(y_of(s)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt(margin_left - 8) << "\" y=\"" << fmt(y_of(s) + 3)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(s) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(margin_left + plot_w / 2) << "\" y=\"" << fmt(height - 6)
      << "\" font-size=\"11\" text-anchor=\"middle\">time (s)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace hdm::stream
