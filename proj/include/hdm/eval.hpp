#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdm/corpus.hpp"
#include "hdm/detectors.hpp"
#include "hdm/mocksvc.hpp"
#include "hdm/timeline.hpp"

namespace hdm::eval {

using Eigen::ArrayXd;
using LabelsXi = Eigen::Array<int, Eigen::Dynamic, 1>;

// --- splits ------------------------------------------------------------------

struct SplitPlan {
  int fold_index = 0;
  std::vector<std::string> train_conversation_ids;
  std::vector<std::string> test_conversation_ids;
  std::uint64_t seed = 0;
};

// k independent random 80/20 partitions by whole conversation (Monte Carlo,
// not rotation folds). |test| = round(test_frac * total).
std::vector<SplitPlan> make_splits(const std::vector<std::string>& conversation_ids, int k = 5,
                                   double test_frac = 0.2, std::uint64_t seed = 0);

// --- metrics -----------------------------------------------------------------

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// score >= threshold predicts positive.
F1Result f1_at_threshold(const ArrayXd& scores, const LabelsXi& labels, double threshold);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

// One point per distinct score, sorted by descending threshold.
std::vector<PrPoint> pr_curve(const ArrayXd& scores, const LabelsXi& labels);

// Threshold maximizing train F1 over distinct scores; ties go to the largest.
double select_threshold(const ArrayXd& scores, const LabelsXi& labels);

// --- corrected resampled t-test -----------------------------------------------

struct TTestResult {
  double t_stat = 0.0;
  int df = 0;
  double p_one_tailed = 1.0;
  bool significant_at_05 = false;
  double rho = 0.25;  // test/train size ratio
  bool degenerate = false;  // zero variance with nonzero mean
};

// t = mean(d) / sqrt((1/k + rho) * var(d)), df = k-1, one-tailed p.
TTestResult nb_ttest(const ArrayXd& per_fold_diffs, double rho);

// Regularized incomplete beta I_x(a, b); continued fraction, relative error
// well under 1e-10 over the t-test range.
double incomplete_beta(double a, double b, double x);

// One-tailed survival P(T_df > t).
double student_t_sf(double t, int df);

// --- full evaluation ----------------------------------------------------------

// Resolves conversation audio (lazily, cached, resampled to the canonical
// rate) and slices example context windows. Conversations without audio_ref
// yield silence so metadata-routed mock endpoints still work.
class AudioStore {
 public:
  AudioStore(const corpus::Corpus& corpus, std::string base_dir);
  const audio::Waveform& conversation_audio(const std::string& conversation_id);
  audio::Waveform window(const timeline::ExampleSpec& spec);
  detect::WindowInput window_input(const timeline::ExampleSpec& spec);

 private:
  const corpus::Corpus& corpus_;
  std::string base_dir_;
  std::map<std::string, audio::Waveform> cache_;
};

struct MccvConfig {
  int k = 5;
  double test_frac = 0.2;
  int neg_ratio = 10;
  double context_s = 4.0;
  double min_elapsed_s = 0.4;
  std::uint64_t seed = 0;
  std::string audio_base_dir;  // audio_ref paths resolve against this
};

// The sampling seed run_mccv derives for one fold's dataset construction;
// exposed so tests can rebuild fold datasets independently.
std::uint64_t fold_sampling_seed(std::uint64_t seed, int fold_index, bool train);

struct FoldResult {
  int fold_index = 0;
  bool skipped = false;  // no positive test events
  std::vector<std::string> test_conversation_ids;
  std::vector<timeline::ExampleSpec> test_examples;  // in-memory only, not serialized
  ArrayXd scores;
  LabelsXi labels;
  double threshold = 0.5;
  F1Result metrics;
  std::vector<PrPoint> pr;
};

struct EvalReport {
  std::string detector_name;
  std::uint64_t seed = 0;
  MccvConfig config;
  std::string config_hash;
  std::uint64_t corpus_fingerprint = 0;
  std::vector<FoldResult> folds;
  double avg_f1 = 0.0;  // mean over non-skipped folds
  int skipped_folds = 0;
  std::vector<std::string> warnings;
};

EvalReport run_mccv(const corpus::Corpus& corpus, const std::vector<corpus::HdmEvent>& events,
                    const detect::DetectorConfig& detector, const MccvConfig& config);

std::string serialize_report(const EvalReport& report);
EvalReport parse_report(const std::string& text);
EvalReport parse_report_file(const std::string& path);
void write_report_file(const EvalReport& report, const std::string& path);

// Paired comparison of two reports over identical splits (same seed, k and
// per-fold test sets required). One-tailed: is a better than b?
TTestResult compare_reports(const EvalReport& a, const EvalReport& b);

// Balanced fine-tune export: JSONL of {"audio_b64","label":"P"|"N"}, all
// positives plus an equal count of negatives drawn without replacement.
std::string export_finetune(const timeline::Dataset& dataset, AudioStore& store,
                            std::uint64_t seed);

// Fingerprint every example window so the mock can route requests that carry
// no metadata.
mock::WindowRegistry build_registry(const timeline::Dataset& dataset, AudioStore& store);

}  // namespace hdm::eval
