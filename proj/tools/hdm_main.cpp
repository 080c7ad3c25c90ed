#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "hdm/audio.hpp"
#include "hdm/corpus.hpp"
#include "hdm/detectors.hpp"
#include "hdm/error.hpp"
#include "hdm/eval.hpp"
#include "hdm/mocksvc.hpp"
#include "hdm/streamer.hpp"
#include "hdm/synth.hpp"
#include "hdm/timeline.hpp"
#include "hdm/version.hpp"

namespace fs = std::filesystem;

namespace {

std::string dir_of(const std::string& path) {
  auto parent = fs::path(path).parent_path();
  return parent.empty() ? "." : parent.string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hdm::RuntimeError("cannot write file: " + path);
  out << text;
}

struct DetectorFlags {
  std::string detector = "hotword";
  std::string endpoint;
  std::string lexicon_file;
  std::string prompt_file;
  int fewshot = 0;
  double timeout_s = 30.0;
  int in_flight = 4;

  void add_to(CLI::App* cmd, bool endpoint_required) {
    cmd->add_option("--detector", detector, "hotword|lm-audio|lm-text|classifier")
        ->required();
    auto* ep = cmd->add_option("--endpoint", endpoint, "model endpoint, e.g. http://127.0.0.1:8091")
                   ->envname("HDM_ENDPOINT");
    if (endpoint_required) ep->required();
    cmd->add_option("--lexicon", lexicon_file, "hotword lexicon file (one phrase per line)");
    cmd->add_option("--prompt", prompt_file, "prompt template file overriding the built-in");
    cmd->add_option("--fewshot", fewshot, "few-shot example count (even)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--timeout", timeout_s, "request timeout in seconds");
    cmd->add_option("--in-flight", in_flight, "max concurrent requests")->check(CLI::PositiveNumber);
  }

  hdm::detect::DetectorConfig build() const {
    hdm::detect::DetectorConfig cfg;
    cfg.kind = hdm::detect::detector_kind_from_name(detector);
    cfg.endpoint = endpoint;
    cfg.fewshot_k = fewshot;
    cfg.timeout_s = timeout_s;
    cfg.in_flight = in_flight;
    if (!lexicon_file.empty()) cfg.lexicon = hdm::detect::parse_lexicon_file(lexicon_file);
    if (!prompt_file.empty()) {
      if (cfg.kind == hdm::detect::DetectorKind::LmText)
        cfg.text_template =
            hdm::detect::load_template_file(prompt_file, hdm::detect::PromptVariant::TextOnly);
      else
        cfg.audio_template =
            hdm::detect::load_template_file(prompt_file, hdm::detect::PromptVariant::Audio);
    }
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hearing-difficulty moment detection toolkit"};
  app.set_version_flag("--version", std::string("hdm ") + hdm::kVersion);
  app.require_subcommand(1);

  // --- import ---------------------------------------------------------------
  auto* import_cmd = app.add_subcommand("import", "normalize a corpus and extract events");
  std::string imp_in, imp_format = "normalized-jsonl", imp_out, imp_tag_map, imp_target_tag,
              imp_refinement, imp_events_out;
  bool imp_stats = false;
  import_cmd->add_option("--in", imp_in, "input corpus file")->required();
  import_cmd->add_option("--format", imp_format, "normalized-jsonl|utterance-csv");
  import_cmd->add_option("--out", imp_out, "normalized JSONL output")->required();
  import_cmd->add_option("--tag-map", imp_tag_map, "act tag map CSV (source,normalized)");
  import_cmd->add_option("--target-tag", imp_target_tag, "act tag marking difficulty events");
  import_cmd->add_option("--refinement", imp_refinement, "refinement list file");
  import_cmd->add_option("--events-out", imp_events_out, "events JSONL output");
  import_cmd->add_flag("--stats", imp_stats, "print corpus statistics");

  // --- build-dataset ----------------------------------------------------------
  auto* build_cmd = app.add_subcommand("build-dataset", "sample labeled context windows");
  std::string bd_corpus, bd_events, bd_out, bd_registry, bd_audio_dir;
  hdm::timeline::SamplingConfig bd_cfg;
  build_cmd->add_option("--corpus", bd_corpus)->required();
  build_cmd->add_option("--events", bd_events)->required();
  build_cmd->add_option("--out", bd_out, "dataset JSONL output")->required();
  build_cmd->add_option("--ratio", bd_cfg.neg_ratio, "negatives per positive");
  build_cmd->add_option("--context-s", bd_cfg.context_s);
  build_cmd->add_option("--min-elapsed-s", bd_cfg.min_elapsed_s);
  build_cmd->add_option("--seed", bd_cfg.seed);
  build_cmd->add_option("--registry", bd_registry, "write a window registry for the mock service");
  build_cmd->add_option("--audio-dir", bd_audio_dir, "base dir for audio_ref paths");

  // --- augment ----------------------------------------------------------------
  auto* aug_cmd = app.add_subcommand("augment", "apply the probabilistic augmentation pipeline");
  std::string aug_in, aug_out;
  std::uint64_t aug_seed = 0;
  std::optional<double> aug_noise, aug_stretch, aug_pitch;
  aug_cmd->add_option("--in", aug_in)->required();
  aug_cmd->add_option("--out", aug_out)->required();
  aug_cmd->add_option("--seed", aug_seed);
  aug_cmd->add_option("--noise", aug_noise, "force noise with this amplitude");
  aug_cmd->add_option("--stretch", aug_stretch, "force time stretch with this rate");
  aug_cmd->add_option("--pitch", aug_pitch, "force pitch shift by this many semitones");

  // --- mock-serve ---------------------------------------------------------------
  auto* mock_cmd = app.add_subcommand("mock-serve", "run the deterministic mock model endpoint");
  std::string ms_corpus, ms_events, ms_registry;
  hdm::mock::MockConfig ms_cfg;
  mock_cmd->add_option("--corpus", ms_corpus)->required();
  mock_cmd->add_option("--events", ms_events)->required();
  mock_cmd->add_option("--registry", ms_registry, "window registry from build-dataset");
  mock_cmd->add_option("--port", ms_cfg.port);
  mock_cmd->add_option("--wer", ms_cfg.word_drop_prob, "per-word transcript drop probability");
  mock_cmd->add_option("--noise", ms_cfg.score_noise_sigma, "gaussian sigma on oracle scores");
  mock_cmd->add_option("--bias", ms_cfg.miscalibration_bias);
  mock_cmd->add_option("--seed", ms_cfg.seed);

  // --- evaluate -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "Monte Carlo cross-validated evaluation");
  std::string ev_corpus, ev_events, ev_out, ev_audio_dir;
  DetectorFlags ev_det;
  hdm::eval::MccvConfig ev_cfg;
  eval_cmd->add_option("--corpus", ev_corpus)->required();
  eval_cmd->add_option("--events", ev_events)->required();
  ev_det.add_to(eval_cmd, /*endpoint_required=*/false);
  eval_cmd->add_option("--k", ev_cfg.k, "number of random splits");
  eval_cmd->add_option("--ratio", ev_cfg.neg_ratio);
  eval_cmd->add_option("--test-frac", ev_cfg.test_frac);
  eval_cmd->add_option("--context-s", ev_cfg.context_s);
  eval_cmd->add_option("--min-elapsed-s", ev_cfg.min_elapsed_s);
  eval_cmd->add_option("--seed", ev_cfg.seed);
  eval_cmd->add_option("--out", ev_out, "report JSON output")->required();
  eval_cmd->add_option("--audio-dir", ev_audio_dir, "base dir for audio_ref paths");

  // --- stream ---------------------------------------------------------------------
  auto* stream_cmd = app.add_subcommand("stream", "continuous sliding-window scoring");
  std::string st_audio, st_events, st_out, st_plot, st_conversation;
  DetectorFlags st_det;
  double st_window_s = 4.0;
  int st_hop_ms = 1000;
  stream_cmd->add_option("--audio", st_audio)->required();
  st_det.add_to(stream_cmd, /*endpoint_required=*/false);
  stream_cmd->add_option("--hop-ms", st_hop_ms);
  stream_cmd->add_option("--window-s", st_window_s);
  stream_cmd->add_option("--events", st_events, "ground-truth events JSONL");
  stream_cmd->add_option("--conversation", st_conversation,
                         "conversation id sent as request metadata");
  stream_cmd->add_option("--out", st_out, "signal CSV output")->required();
  stream_cmd->add_option("--plot", st_plot, "optional SVG plot output");

  // --- compare ----------------------------------------------------------------------
  auto* cmp_cmd = app.add_subcommand("compare", "corrected paired t-test between two reports");
  std::string cmp_a, cmp_b;
  cmp_cmd->add_option("--a", cmp_a)->required();
  cmp_cmd->add_option("--b", cmp_b)->required();

  // --- export-finetune ----------------------------------------------------------------
  auto* ft_cmd = app.add_subcommand("export-finetune", "balanced audio/label JSONL for trainers");
  std::string ft_dataset, ft_corpus, ft_out, ft_audio_dir;
  std::uint64_t ft_seed = 0;
  ft_cmd->add_option("--dataset", ft_dataset)->required();
  ft_cmd->add_option("--corpus", ft_corpus)->required();
  ft_cmd->add_option("--out", ft_out)->required();
  ft_cmd->add_option("--seed", ft_seed);
  ft_cmd->add_option("--audio-dir", ft_audio_dir, "base dir for audio_ref paths");

  // --- synth -------------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with planted events");
  std::string sy_out_dir;
  hdm::synth::SynthConfig sy_cfg;
  synth_cmd->add_option("--out-dir", sy_out_dir)->required();
  synth_cmd->add_option("--conversations", sy_cfg.conversations);
  synth_cmd->add_option("--events-per-conv", sy_cfg.events_per_conv);
  synth_cmd->add_option("--duration-s", sy_cfg.duration_s);
  synth_cmd->add_option("--seed", sy_cfg.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*import_cmd) {
      auto corpus = hdm::corpus::parse_corpus_file(imp_in, hdm::corpus::format_from_name(imp_format));
      if (!imp_tag_map.empty())
        corpus = hdm::corpus::map_act_tags(corpus, hdm::corpus::parse_act_tag_map_file(imp_tag_map));
      hdm::corpus::write_corpus_file(corpus, imp_out);

      std::vector<hdm::corpus::HdmEvent> events;
      if (!imp_target_tag.empty()) {
        hdm::corpus::RefinementList refinement;
        if (!imp_refinement.empty())
          refinement = hdm::corpus::parse_refinement_list_file(imp_refinement);
        events = hdm::corpus::extract_hdm_events(corpus, imp_target_tag, refinement);
        if (!imp_events_out.empty()) hdm::corpus::write_events_file(events, imp_events_out);
        std::cout << "extracted " << events.size() << " events\n";
      }
      if (imp_stats) {
        auto stats = hdm::corpus::corpus_stats(corpus, events);
        std::cout << "conversations: " << stats.conversation_count
                  << "\nutterances: " << stats.utterance_count
                  << "\nevents: " << stats.event_count << "\n";
        if (stats.mean_duration_s)
          std::cout << "mean event duration: " << *stats.mean_duration_s * 1000.0 << " ms\n";
        if (stats.median_duration_s)
          std::cout << "median event duration: " << *stats.median_duration_s * 1000.0 << " ms\n";
      }
    } else if (*build_cmd) {
      auto corpus = hdm::corpus::parse_corpus_file(bd_corpus, hdm::corpus::Format::NormalizedJsonl);
      auto events = hdm::corpus::parse_events_file(bd_events);
      auto dataset = hdm::timeline::build_dataset(corpus, events, bd_cfg);
      hdm::timeline::write_dataset_file(dataset, bd_out);
      if (dataset.dropped_short_context > 0)
        std::cerr << "warning: dropped " << dataset.dropped_short_context
                  << " events whose context would start before 0\n";
      std::cout << "dataset: " << dataset.positive_count() << " positives, "
                << dataset.negative_count() << " negatives\n";
      if (!bd_registry.empty()) {
        hdm::eval::AudioStore store(corpus,
                                    bd_audio_dir.empty() ? dir_of(bd_corpus) : bd_audio_dir);
        hdm::mock::write_registry_file(hdm::eval::build_registry(dataset, store), bd_registry);
      }
    } else if (*aug_cmd) {
      auto w = hdm::audio::read_wav_file(aug_in);
      if (w.sample_rate_hz != hdm::audio::kCanonicalRateHz)
        w = hdm::audio::resample(w, hdm::audio::kCanonicalRateHz);
      hdm::Rng rng(aug_seed);
      if (aug_noise || aug_stretch || aug_pitch) {
        if (aug_noise) w = hdm::audio::add_noise(w, *aug_noise, rng);
        if (aug_stretch) w = hdm::audio::time_stretch(w, *aug_stretch);
        if (aug_pitch) w = hdm::audio::pitch_shift(w, *aug_pitch);
        w.samples = w.samples.min(1.0f).max(-1.0f);
      } else {
        w = hdm::audio::augment(w, hdm::audio::AugmentConfig{.seed = aug_seed}, rng);
      }
      hdm::audio::write_wav_file(w, aug_out);
    } else if (*mock_cmd) {
      ms_cfg.corpus = hdm::corpus::parse_corpus_file(ms_corpus, hdm::corpus::Format::NormalizedJsonl);
      ms_cfg.events = hdm::corpus::parse_events_file(ms_events);
      if (!ms_registry.empty()) ms_cfg.registry = hdm::mock::parse_registry_file(ms_registry);
      hdm::mock::MockService service(std::move(ms_cfg));
      int port = service.start();
      std::cout << "mock service listening on port " << port << std::endl;
      for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
    } else if (*eval_cmd) {
      auto corpus = hdm::corpus::parse_corpus_file(ev_corpus, hdm::corpus::Format::NormalizedJsonl);
      auto events = hdm::corpus::parse_events_file(ev_events);
      auto detector = ev_det.build();
      ev_cfg.audio_base_dir = ev_audio_dir.empty() ? dir_of(ev_corpus) : ev_audio_dir;
      auto report = hdm::eval::run_mccv(corpus, events, detector, ev_cfg);
      hdm::eval::write_report_file(report, ev_out);
      for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";
      std::cout << "avg F1 (" << report.detector_name << ", k=" << ev_cfg.k
                << "): " << report.avg_f1 << "\n";
    } else if (*stream_cmd) {
      auto w = hdm::audio::read_wav_file(st_audio);
      if (w.sample_rate_hz != hdm::audio::kCanonicalRateHz)
        w = hdm::audio::resample(w, hdm::audio::kCanonicalRateHz);
      auto detector = st_det.build();
      std::optional<std::string> conv_id;
      if (!st_conversation.empty()) conv_id = st_conversation;
      auto signal = hdm::stream::stream_scores(w, detector, st_window_s, st_hop_ms, conv_id);
      if (!st_events.empty()) signal.ground_truth = hdm::corpus::parse_events_file(st_events);
      write_text_file(st_out, hdm::stream::export_signal_csv(signal));
      if (!st_plot.empty()) write_text_file(st_plot, hdm::stream::render_plot_svg(signal));
      std::cout << "scored " << signal.points.size() << " windows\n";
    } else if (*cmp_cmd) {
      auto a = hdm::eval::parse_report_file(cmp_a);
      auto b = hdm::eval::parse_report_file(cmp_b);
      auto t = hdm::eval::compare_reports(a, b);
      std::printf("t = %.6f, df = %d, one-tailed p = %.6g, rho = %.4f\n", t.t_stat, t.df,
                  t.p_one_tailed, t.rho);
      std::printf("%s mean F1 %.4f vs %s mean F1 %.4f: %ssignificant at 0.05%s\n",
                  a.detector_name.c_str(), a.avg_f1, b.detector_name.c_str(), b.avg_f1,
                  t.significant_at_05 ? "" : "not ",
                  t.degenerate ? " (zero variance)" : "");
    } else if (*ft_cmd) {
      auto corpus = hdm::corpus::parse_corpus_file(ft_corpus, hdm::corpus::Format::NormalizedJsonl);
      auto dataset = hdm::timeline::parse_dataset_file(ft_dataset);
      hdm::eval::AudioStore store(corpus, ft_audio_dir.empty() ? dir_of(ft_corpus) : ft_audio_dir);
      write_text_file(ft_out, hdm::eval::export_finetune(dataset, store, ft_seed));
    } else if (*synth_cmd) {
      auto output = hdm::synth::generate(sy_cfg);
      hdm::synth::write_to_dir(output, sy_out_dir);
      std::cout << "wrote " << output.corpus.conversations.size() << " conversations, "
                << output.events.size() << " events to " << sy_out_dir << "\n";
    }
  } catch (const hdm::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
