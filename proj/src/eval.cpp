#include "hdm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hdm/base64.hpp"
#include "hdm/error.hpp"
#include "hdm/rng.hpp"
#include "hdm/version.hpp"

using json = nlohmann::json;

namespace hdm::eval {

// --- splits ------------------------------------------------------------------

std::vector<SplitPlan> make_splits(const std::vector<std::string>& conversation_ids, int k,
                                   double test_frac, std::uint64_t seed) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (!(test_frac > 0.0) || !(test_frac < 1.0))
    throw ValidationError("test_frac must be in (0, 1)");
  if (conversation_ids.size() < 2)
    throw ValidationError("need at least 2 conversations to split");
  {
    std::set<std::string> uniq(conversation_ids.begin(), conversation_ids.end());
    if (uniq.size() != conversation_ids.size())
      throw ValidationError("conversation ids are not unique");
  }

  const auto n = conversation_ids.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_frac * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n)
    throw ValidationError("test_frac " + std::to_string(test_frac) + " of " + std::to_string(n) +
                          " conversations leaves an empty train or test set");

  std::vector<SplitPlan> plans;
  plans.reserve(static_cast<std::size_t>(k));
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::string> ids = conversation_ids;
    Rng rng = Rng::split(seed, "split", static_cast<std::uint64_t>(fold));
    rng.shuffle(ids);
    SplitPlan plan;
    plan.fold_index = fold;
    plan.seed = seed;
    plan.test_conversation_ids.assign(ids.begin(), ids.begin() + static_cast<long>(n_test));
    plan.train_conversation_ids.assign(ids.begin() + static_cast<long>(n_test), ids.end());
    std::sort(plan.test_conversation_ids.begin(), plan.test_conversation_ids.end());
    std::sort(plan.train_conversation_ids.begin(), plan.train_conversation_ids.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

// --- metrics -----------------------------------------------------------------

namespace {

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion count_confusion(const ArrayXd& scores, const LabelsXi& labels, double threshold) {
  Confusion c;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (pred && actual)
      ++c.tp;
    else if (pred && !actual)
      ++c.fp;
    else if (!pred && actual)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

F1Result metrics_from(const Confusion& c) {
  F1Result r;
  if (c.tp + c.fp == 0)
    r.precision = (c.tp + c.fn == 0) ? 1.0 : 0.0;
  else
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = (c.tp + c.fn == 0) ? 1.0
                                : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f1 = (r.precision + r.recall > 0.0) ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                        : 0.0;
  return r;
}

void check_scores_labels(const ArrayXd& scores, const LabelsXi& labels) {
  if (scores.size() == 0) throw ValidationError("empty score vector");
  if (scores.size() != labels.size())
    throw ValidationError("scores and labels differ in length");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1)
      throw ValidationError("labels must be 0 or 1");
}

}  // namespace

F1Result f1_at_threshold(const ArrayXd& scores, const LabelsXi& labels, double threshold) {
  check_scores_labels(scores, labels);
  return metrics_from(count_confusion(scores, labels, threshold));
}

std::vector<PrPoint> pr_curve(const ArrayXd& scores, const LabelsXi& labels) {
  check_scores_labels(scores, labels);
  const long n_pos = (labels == 1).count();
  const long n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError("pr_curve needs at least one positive and one negative label");

  std::vector<double> thresholds(scores.data(), scores.data() + scores.size());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<PrPoint> curve;
  curve.reserve(thresholds.size());
  for (double thr : thresholds) {
    F1Result m = metrics_from(count_confusion(scores, labels, thr));
    curve.push_back({m.precision, m.recall, thr});
  }
  return curve;
}

double select_threshold(const ArrayXd& scores, const LabelsXi& labels) {
  check_scores_labels(scores, labels);
  std::vector<double> thresholds(scores.data(), scores.data() + scores.size());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  double best_thr = thresholds.front();
  double best_f1 = -1.0;
  for (double thr : thresholds) {  // descending: first maximizer is the largest
    F1Result m = metrics_from(count_confusion(scores, labels, thr));
    if (m.f1 > best_f1) {
      best_f1 = m.f1;
      best_thr = thr;
    }
  }
  return best_thr;
}

// --- corrected resampled t-test -----------------------------------------------

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw ValidationError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  // symmetry keeps the continued fraction in its fast-converging region
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_prefix =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);

  // Lentz's method
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_prefix) * h / a;
}

double student_t_sf(double t, int df) {
  if (df < 1) throw ValidationError("degrees of freedom must be >= 1");
  if (std::isnan(t)) throw ValidationError("t statistic is NaN");
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

TTestResult nb_ttest(const ArrayXd& per_fold_diffs, double rho) {
  const auto k = per_fold_diffs.size();
  if (k < 2) throw ValidationError("nb_ttest needs at least 2 folds");
  // rho = 0 drops the correction and gives the classic one-sample statistic
  if (rho < 0.0) throw ValidationError("rho must be non-negative");

  TTestResult result;
  result.rho = rho;
  result.df = static_cast<int>(k) - 1;

  const double mean = per_fold_diffs.mean();
  const double var =
      (per_fold_diffs - mean).square().sum() / static_cast<double>(k - 1);  // unbiased

  if (var == 0.0) {
    if (mean == 0.0) {
      result.t_stat = 0.0;
      result.p_one_tailed = 1.0;
    } else {
      result.t_stat = mean > 0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
      result.p_one_tailed = mean > 0 ? 0.0 : 1.0;
      result.degenerate = true;
    }
  } else {
    result.t_stat = mean / std::sqrt((1.0 / static_cast<double>(k) + rho) * var);
    result.p_one_tailed = student_t_sf(result.t_stat, result.df);
  }
  result.significant_at_05 = result.p_one_tailed < 0.05;
  return result;
}

// --- audio resolution ---------------------------------------------------------

AudioStore::AudioStore(const corpus::Corpus& corpus, std::string base_dir)
    : corpus_(corpus), base_dir_(std::move(base_dir)) {}

const audio::Waveform& AudioStore::conversation_audio(const std::string& conversation_id) {
  auto it = cache_.find(conversation_id);
  if (it != cache_.end()) return it->second;

  const auto& conv = corpus_.at(conversation_id);
  audio::Waveform w;
  if (conv.audio_ref.empty()) {
    // no audio on disk: silence keeps metadata-routed mock flows working
    w.sample_rate_hz = audio::kCanonicalRateHz;
    w.samples = audio::Samples::Zero(
        static_cast<Eigen::Index>(std::llround(conv.duration_s * audio::kCanonicalRateHz)));
  } else {
    std::filesystem::path p(conv.audio_ref);
    if (p.is_relative() && !base_dir_.empty()) p = std::filesystem::path(base_dir_) / p;
    w = audio::read_wav_file(p.string());
    if (w.sample_rate_hz != audio::kCanonicalRateHz)
      w = audio::resample(w, audio::kCanonicalRateHz);
  }
  return cache_.emplace(conversation_id, std::move(w)).first->second;
}

audio::Waveform AudioStore::window(const timeline::ExampleSpec& spec) {
  const audio::Waveform& full = conversation_audio(spec.conversation_id);
  const double duration = full.duration_s();
  double start = spec.context_start_s;
  double end = spec.context_end_s;
  if (end > duration) {  // tolerate float slop at the conversation tail
    const double shift = end - duration;
    if (shift > 0.05)
      throw ValidationError("example window ends past the audio of " + spec.conversation_id);
    start -= shift;
    end = duration;
  }
  return audio::slice(full, std::max(0.0, start), end);
}

detect::WindowInput AudioStore::window_input(const timeline::ExampleSpec& spec) {
  detect::WindowInput input;
  input.waveform = window(spec);
  input.end_time_s = spec.t_s;
  input.conversation_id = spec.conversation_id;
  return input;
}

// --- run_mccv -----------------------------------------------------------------

std::uint64_t fold_sampling_seed(std::uint64_t seed, int fold_index, bool train) {
  return fnv1a64(std::string(train ? "train" : "test") + ":" + std::to_string(fold_index),
                 seed ^ 0x9e3779b97f4a7c15ULL);
}

namespace {

corpus::Corpus sub_corpus(const corpus::Corpus& corpus, const std::vector<std::string>& ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  corpus::Corpus out;
  for (const auto& conv : corpus.conversations)
    if (wanted.count(conv.id)) out.conversations.push_back(conv);
  return out;
}

std::vector<corpus::HdmEvent> sub_events(const std::vector<corpus::HdmEvent>& events,
                                         const std::vector<std::string>& ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<corpus::HdmEvent> out;
  for (const auto& e : events)
    if (wanted.count(e.conversation_id)) out.push_back(e);
  return out;
}

std::string hash_config(const MccvConfig& c, std::uint64_t corpus_fp) {
  std::ostringstream ss;
  ss << c.k << '|' << c.test_frac << '|' << c.neg_ratio << '|' << c.context_s << '|'
     << c.min_elapsed_s << '|' << c.seed << '|' << corpus_fp;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

// Scores a dataset; labels follow the dataset's example order.
std::pair<ArrayXd, LabelsXi> score_dataset(const timeline::Dataset& ds, AudioStore& store,
                                           const detect::DetectorConfig& detector,
                                           const detect::FewShotSet& fewshot) {
  std::vector<detect::WindowInput> windows;
  windows.reserve(ds.examples.size());
  for (const auto& spec : ds.examples) windows.push_back(store.window_input(spec));
  auto scores = detect::score_windows(detector, windows, fewshot);

  ArrayXd s(static_cast<Eigen::Index>(scores.size()));
  LabelsXi l(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    s[static_cast<Eigen::Index>(i)] = scores[i];
    l[static_cast<Eigen::Index>(i)] = ds.examples[i].label == timeline::Label::Positive ? 1 : 0;
  }
  return {std::move(s), std::move(l)};
}

detect::FewShotSet resolve_fewshot(const timeline::Dataset& train_ds,
                                   const detect::DetectorConfig& detector, AudioStore& store,
                                   std::uint64_t seed) {
  detect::FewShotSet fewshot;
  const bool is_lm = detector.kind == detect::DetectorKind::LmAudio ||
                     detector.kind == detect::DetectorKind::LmText;
  if (!is_lm || detector.fewshot_k == 0) return fewshot;

  Rng rng(seed);
  fewshot = detect::assemble_fewshot(train_ds.examples, detector.fewshot_k, rng);
  for (auto& ex : fewshot.examples) {
    if (detector.kind == detect::DetectorKind::LmAudio) {
      ex.waveform = store.window(ex.spec);
    } else {
      detect::ModelClient client(detector.endpoint, detector.timeout_s, detector.max_retries,
                                 detector.backoff_ms);
      ex.transcript = client.transcribe(store.window_input(ex.spec));
    }
  }
  return fewshot;
}

}  // namespace

EvalReport run_mccv(const corpus::Corpus& corpus, const std::vector<corpus::HdmEvent>& events,
                    const detect::DetectorConfig& detector, const MccvConfig& config) {
  EvalReport report;
  report.detector_name = detect::detector_kind_name(detector.kind);
  report.seed = config.seed;
  report.config = config;
  report.corpus_fingerprint = corpus::corpus_fingerprint(corpus);
  report.config_hash = hash_config(config, report.corpus_fingerprint);

  std::vector<std::string> ids;
  ids.reserve(corpus.conversations.size());
  for (const auto& conv : corpus.conversations) ids.push_back(conv.id);
  auto plans = make_splits(ids, config.k, config.test_frac, config.seed);

  AudioStore store(corpus, config.audio_base_dir);

  timeline::SamplingConfig sampling;
  sampling.context_s = config.context_s;
  sampling.min_elapsed_s = config.min_elapsed_s;
  sampling.neg_ratio = config.neg_ratio;

  double f1_sum = 0.0;
  int f1_count = 0;
  for (const auto& plan : plans) {
    FoldResult fold;
    fold.fold_index = plan.fold_index;
    fold.test_conversation_ids = plan.test_conversation_ids;

    auto test_events = sub_events(events, plan.test_conversation_ids);
    if (test_events.empty()) {
      fold.skipped = true;
      report.skipped_folds++;
      report.warnings.push_back("fold " + std::to_string(plan.fold_index) +
                                " skipped: no positive test events");
      report.folds.push_back(std::move(fold));
      continue;
    }

    // fold-specific sampling: negatives are redrawn per split
    auto test_corpus = sub_corpus(corpus, plan.test_conversation_ids);
    auto test_sampling = sampling;
    test_sampling.seed = fold_sampling_seed(config.seed, plan.fold_index, false);
    auto test_ds = timeline::build_dataset(test_corpus, test_events, test_sampling);
    if (test_ds.positive_count() == 0) {
      fold.skipped = true;
      report.skipped_folds++;
      report.warnings.push_back("fold " + std::to_string(plan.fold_index) +
                                " skipped: no usable positive examples");
      report.folds.push_back(std::move(fold));
      continue;
    }

    auto train_corpus = sub_corpus(corpus, plan.train_conversation_ids);
    auto train_events = sub_events(events, plan.train_conversation_ids);
    auto train_sampling = sampling;
    train_sampling.seed = fold_sampling_seed(config.seed, plan.fold_index, true);

    double threshold = 0.5;
    detect::FewShotSet fewshot;
    if (!train_events.empty()) {
      auto train_ds = timeline::build_dataset(train_corpus, train_events, train_sampling);
      if (train_ds.positive_count() > 0) {
        fewshot = resolve_fewshot(train_ds, detector, store,
                                  fold_sampling_seed(config.seed, plan.fold_index, true) ^ 0xfeedULL);
        auto [train_scores, train_labels] = score_dataset(train_ds, store, detector, fewshot);
        threshold = select_threshold(train_scores, train_labels);
      } else {
        report.warnings.push_back("fold " + std::to_string(plan.fold_index) +
                                  ": no usable train positives; default threshold 0.5");
      }
    } else {
      report.warnings.push_back("fold " + std::to_string(plan.fold_index) +
                                ": no train events; default threshold 0.5");
    }

    auto [scores, labels] = score_dataset(test_ds, store, detector, fewshot);
    fold.test_examples = test_ds.examples;
    fold.scores = std::move(scores);
    fold.labels = std::move(labels);
    fold.threshold = threshold;
    fold.metrics = f1_at_threshold(fold.scores, fold.labels, threshold);
    fold.pr = pr_curve(fold.scores, fold.labels);

    f1_sum += fold.metrics.f1;
    ++f1_count;
    report.folds.push_back(std::move(fold));
  }

  report.avg_f1 = f1_count > 0 ? f1_sum / f1_count : 0.0;
  return report;
}

// --- report serialization -------------------------------------------------------

std::string serialize_report(const EvalReport& report) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    json jf{{"fold_index", f.fold_index},
            {"skipped", f.skipped},
            {"test_conversations", f.test_conversation_ids}};
    if (!f.skipped) {
      jf["threshold"] = f.threshold;
      jf["precision"] = f.metrics.precision;
      jf["recall"] = f.metrics.recall;
      jf["f1"] = f.metrics.f1;
      jf["scores"] = std::vector<double>(f.scores.data(), f.scores.data() + f.scores.size());
      jf["labels"] = std::vector<int>(f.labels.data(), f.labels.data() + f.labels.size());
      json pr = json::array();
      for (const auto& p : f.pr)
        pr.push_back({{"precision", p.precision}, {"recall", p.recall}, {"threshold", p.threshold}});
      jf["pr_curve"] = std::move(pr);
    }
    folds.push_back(std::move(jf));
  }
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(report.corpus_fingerprint));
  json j{{"tool_version", kVersion},
         {"detector", report.detector_name},
         {"seed", report.seed},
         {"k", report.config.k},
         {"test_frac", report.config.test_frac},
         {"neg_ratio", report.config.neg_ratio},
         {"context_s", report.config.context_s},
         {"min_elapsed_s", report.config.min_elapsed_s},
         {"config_hash", report.config_hash},
         {"corpus_fingerprint", fp},
         {"avg_f1", report.avg_f1},
         {"skipped_folds", report.skipped_folds},
         {"warnings", report.warnings},
         {"folds", std::move(folds)}};
  return j.dump(2) + "\n";
}

EvalReport parse_report(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  EvalReport report;
  try {
    report.detector_name = j.at("detector").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.config.k = j.at("k").get<int>();
    report.config.test_frac = j.at("test_frac").get<double>();
    report.config.neg_ratio = j.at("neg_ratio").get<int>();
    report.config.context_s = j.at("context_s").get<double>();
    report.config.min_elapsed_s = j.at("min_elapsed_s").get<double>();
    report.config.seed = report.seed;
    report.config_hash = j.at("config_hash").get<std::string>();
    report.corpus_fingerprint =
        std::stoull(j.at("corpus_fingerprint").get<std::string>(), nullptr, 16);
    report.avg_f1 = j.at("avg_f1").get<double>();
    report.skipped_folds = j.at("skipped_folds").get<int>();
    if (j.contains("warnings")) report.warnings = j["warnings"].get<std::vector<std::string>>();
    for (const auto& jf : j.at("folds")) {
      FoldResult f;
      f.fold_index = jf.at("fold_index").get<int>();
      f.skipped = jf.at("skipped").get<bool>();
      f.test_conversation_ids = jf.at("test_conversations").get<std::vector<std::string>>();
      if (!f.skipped) {
        f.threshold = jf.at("threshold").get<double>();
        f.metrics.precision = jf.at("precision").get<double>();
        f.metrics.recall = jf.at("recall").get<double>();
        f.metrics.f1 = jf.at("f1").get<double>();
        auto scores = jf.at("scores").get<std::vector<double>>();
        auto labels = jf.at("labels").get<std::vector<int>>();
        f.scores = Eigen::Map<const ArrayXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
        f.labels = Eigen::Map<const LabelsXi>(labels.data(), static_cast<Eigen::Index>(labels.size()));
        for (const auto& jp : jf.at("pr_curve"))
          f.pr.push_back({jp.at("precision").get<double>(), jp.at("recall").get<double>(),
                          jp.at("threshold").get<double>()});
      }
      report.folds.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  return report;
}

EvalReport parse_report_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open report file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_report(text);
}

void write_report_file(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write report file: " + path);
  out << serialize_report(report);
}

TTestResult compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.seed != b.seed)
    throw ValidationError("reports were produced with different seeds (" + std::to_string(a.seed) +
                          " vs " + std::to_string(b.seed) + "); splits do not match");
  if (a.config.k != b.config.k || a.folds.size() != b.folds.size())
    throw ValidationError("reports have different fold counts");
  if (a.config_hash != b.config_hash)
    throw ValidationError("reports were produced with different eval configs");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    const auto& fa = a.folds[i];
    const auto& fb = b.folds[i];
    if (fa.test_conversation_ids != fb.test_conversation_ids)
      throw ValidationError("fold " + std::to_string(i) + " test sets differ between reports");
    if (fa.skipped || fb.skipped) continue;
    diffs.push_back(fa.metrics.f1 - fb.metrics.f1);
  }
  if (diffs.size() < 2)
    throw ValidationError("fewer than 2 comparable folds after skips");

  const double rho = a.config.test_frac / (1.0 - a.config.test_frac);
  ArrayXd d = Eigen::Map<const ArrayXd>(diffs.data(), static_cast<Eigen::Index>(diffs.size()));
  return nb_ttest(d, rho);
}

std::string export_finetune(const timeline::Dataset& dataset, AudioStore& store,
                            std::uint64_t seed) {
  std::vector<const timeline::ExampleSpec*> pos, neg;
  for (const auto& e : dataset.examples)
    (e.label == timeline::Label::Positive ? pos : neg).push_back(&e);
  if (pos.size() > neg.size())
    throw ValidationError("dataset has fewer negatives than positives; cannot balance");

  Rng rng = Rng::split(seed, "finetune");
  rng.shuffle(neg);
  neg.resize(pos.size());

  std::string out;
  auto emit = [&](const timeline::ExampleSpec& spec, const char* label) {
    audio::Waveform w = store.window(spec);
    nlohmann::json j{{"audio_b64", base64_encode(audio::write_wav(w, audio::WavFormat::Pcm16))},
                     {"label", label}};
    out += j.dump();
    out += '\n';
  };
  for (const auto* p : pos) emit(*p, "P");
  for (const auto* n : neg) emit(*n, "N");
  return out;
}

mock::WindowRegistry build_registry(const timeline::Dataset& dataset, AudioStore& store) {
  mock::WindowRegistry reg;
  for (const auto& spec : dataset.examples) {
    audio::Waveform w = store.window(spec);
    std::uint64_t fp = fnv1a64(audio::write_wav(w, audio::WavFormat::Pcm16));
    reg.by_fingerprint[fp] = {spec.conversation_id, spec.t_s, spec.context_start_s};
  }
  return reg;
}

}  // namespace hdm::eval
