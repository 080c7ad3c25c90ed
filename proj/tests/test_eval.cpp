#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hdm/error.hpp"
#include "hdm/eval.hpp"
#include "hdm/synth.hpp"
#include "test_helpers.hpp"

using namespace hdm;
using namespace hdm::eval;

namespace {

// Closed-form Student-t CDF for integer df (finite trigonometric series),
// evaluated in long double. Independent of the incomplete-beta route.
long double t_sf_series(long double t, int df) {
  if (t < 0) return 1.0L - t_sf_series(-t, df);
  const long double pi = acosl(-1.0L);
  const long double x = t / sqrtl(static_cast<long double>(df));
  const long double theta = atanl(x);
  const long double c = cosl(theta), s = sinl(theta);
  long double two_sided;  // P(|T| <= t)
  if (df == 1) {
    two_sided = 2.0L * theta / pi;
  } else if (df % 2 == 1) {
    long double term = c, sum = c, coef = 1.0L;
    for (int j = 3; j <= df - 2; j += 2) {
      coef *= static_cast<long double>(j - 1) / j;
      term *= c * c;
      sum += coef * term;
    }
    two_sided = 2.0L / pi * (theta + s * sum);
  } else {
    long double term = 1.0L, sum = 1.0L, coef = 1.0L;
    for (int j = 2; j <= df - 2; j += 2) {
      coef *= static_cast<long double>(j - 1) / j;
      term *= c * c;
      sum += coef * term;
    }
    two_sided = s * sum;
  }
  return (1.0L - two_sided) / 2.0L;
}

// independent confusion counting for the metric oracles
F1Result brute_force_f1(const ArrayXd& scores, const LabelsXi& labels, double thr) {
  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= thr;
    bool truth = labels[i] == 1;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  F1Result r;
  r.precision = tp + fp == 0 ? (tp + fn == 0 ? 1.0 : 0.0)
                             : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace

TEST_CASE("make_splits") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("c" + std::to_string(i));

  SUBCASE("10 conversations at 0.2 gives 2 test, 8 train") {
    auto plans = make_splits(ids, 5, 0.2, 42);
    REQUIRE(plans.size() == 5);
    for (const auto& p : plans) {
      CHECK(p.test_conversation_ids.size() == 2);
      CHECK(p.train_conversation_ids.size() == 8);
      // disjoint and exhaustive
      std::set<std::string> all(p.test_conversation_ids.begin(), p.test_conversation_ids.end());
      all.insert(p.train_conversation_ids.begin(), p.train_conversation_ids.end());
      CHECK(all.size() == 10);
    }
  }

  SUBCASE("same seed reproduces plans; different seeds differ") {
    auto a = make_splits(ids, 5, 0.2, 1);
    auto b = make_splits(ids, 5, 0.2, 1);
    auto c = make_splits(ids, 5, 0.2, 2);
    bool same_ab = true, same_ac = true;
    for (int f = 0; f < 5; ++f) {
      same_ab = same_ab && a[f].test_conversation_ids == b[f].test_conversation_ids;
      same_ac = same_ac && a[f].test_conversation_ids == c[f].test_conversation_ids;
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
  }

  SUBCASE("plans are random partitions, not a rotation") {
    auto plans = make_splits(ids, 5, 0.2, 3);
    std::set<std::string> seen;
    for (const auto& p : plans)
      seen.insert(p.test_conversation_ids.begin(), p.test_conversation_ids.end());
    // a rotation would cover all 10 exactly once; random draws repeat
    CHECK(seen.size() < 10);
  }

  SUBCASE("error cases") {
    CHECK_THROWS_AS(make_splits(ids, 0, 0.2, 1), ValidationError);
    CHECK_THROWS_AS(make_splits(ids, 5, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(make_splits(ids, 5, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(make_splits({"only"}, 5, 0.2, 1), ValidationError);
    CHECK_THROWS_AS(make_splits({"a", "b"}, 5, 0.2, 1), ValidationError);  // round(0.4) = 0
  }
}

TEST_CASE("f1_at_threshold") {
  SUBCASE("TP=3 FP=1 FN=2") {
    ArrayXd scores(6);
    scores << 0.9, 0.8, 0.7, 0.6, 0.4, 0.3;
    LabelsXi labels(6);
    labels << 1, 1, 0, 1, 1, 1;  // at 0.5: TP {0.9,0.8,0.6}, FP {0.7}, FN {0.4,0.3}
    F1Result r = f1_at_threshold(scores, labels, 0.5);
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall == doctest::Approx(0.6));
    CHECK(r.f1 == doctest::Approx(0.666667).epsilon(1e-5));
  }

  SUBCASE("perfect separation at 0.5 gives f1 = 1") {
    ArrayXd scores(4);
    scores << 0.9, 0.8, 0.2, 0.1;
    LabelsXi labels(4);
    labels << 1, 1, 0, 0;
    CHECK(f1_at_threshold(scores, labels, 0.5).f1 == 1.0);
  }

  SUBCASE("random instances match the brute-force oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 50;
      ArrayXd scores(n);
      LabelsXi labels(n);
      for (int i = 0; i < n; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.coin(0.3) ? 1 : 0;
      }
      double thr = rng.uniform();
      F1Result ours = f1_at_threshold(scores, labels, thr);
      F1Result oracle = brute_force_f1(scores, labels, thr);
      CHECK(ours.precision == oracle.precision);
      CHECK(ours.recall == oracle.recall);
      CHECK(ours.f1 == oracle.f1);
    }
  }

  SUBCASE("empty input rejected") {
    CHECK_THROWS_AS(f1_at_threshold(ArrayXd(), LabelsXi(), 0.5), ValidationError);
  }
}

TEST_CASE("pr_curve") {
  SUBCASE("worked three-threshold example") {
    ArrayXd scores(3);
    scores << 0.9, 0.8, 0.1;
    LabelsXi labels(3);
    labels << 1, 1, 0;
    auto curve = pr_curve(scores, labels);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].precision == doctest::Approx(1.0));
    CHECK(curve[0].recall == doctest::Approx(0.5));
    CHECK(curve[1].precision == doctest::Approx(1.0));
    CHECK(curve[1].recall == doctest::Approx(1.0));
    CHECK(curve[2].precision == doctest::Approx(2.0 / 3.0));
    CHECK(curve[2].recall == doctest::Approx(1.0));
  }

  SUBCASE("separable data has a (1,1) point") {
    ArrayXd scores(6);
    scores << 0.9, 0.85, 0.8, 0.3, 0.2, 0.1;
    LabelsXi labels(6);
    labels << 1, 1, 1, 0, 0, 0;
    auto curve = pr_curve(scores, labels);
    bool found = false;
    for (const auto& p : curve)
      if (p.precision == 1.0 && p.recall == 1.0) found = true;
    CHECK(found);
  }

  SUBCASE("recall is monotone and points match the oracle, random instances") {
    Rng rng(88);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 40;
      ArrayXd scores(n);
      LabelsXi labels(n);
      labels.setZero();
      for (int i = 0; i < n; ++i) scores[i] = rng.uniform();
      for (int i = 0; i < n; ++i) labels[i] = rng.coin(0.4) ? 1 : 0;
      if ((labels == 1).count() == 0 || (labels == 0).count() == 0) continue;
      auto curve = pr_curve(scores, labels);
      double prev_recall = -1.0;
      for (const auto& p : curve) {
        F1Result oracle = brute_force_f1(scores, labels, p.threshold);
        CHECK(p.precision == oracle.precision);
        CHECK(p.recall == oracle.recall);
        CHECK(p.recall >= prev_recall);
        prev_recall = p.recall;
      }
    }
  }

  SUBCASE("single-class input rejected") {
    ArrayXd scores(2);
    scores << 0.5, 0.6;
    LabelsXi labels(2);
    labels << 1, 1;
    CHECK_THROWS_AS(pr_curve(scores, labels), ValidationError);
  }
}

TEST_CASE("select_threshold") {
  SUBCASE("separable data: the largest maximizer") {
    ArrayXd scores(4);
    scores << 0.9, 0.8, 0.2, 0.1;
    LabelsXi labels(4);
    labels << 1, 1, 0, 0;
    CHECK(select_threshold(scores, labels) == 0.8);
  }

  SUBCASE("single distinct score returns that score") {
    ArrayXd scores(3);
    scores << 0.4, 0.4, 0.4;
    LabelsXi labels(3);
    labels << 1, 0, 1;
    CHECK(select_threshold(scores, labels) == 0.4);
  }

  SUBCASE("agrees with an exhaustive sweep") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 30;
      ArrayXd scores(n);
      LabelsXi labels(n);
      for (int i = 0; i < n; ++i) {
        scores[i] = rng.uniform_int(0, 9) / 10.0;  // force ties
        labels[i] = rng.coin(0.4) ? 1 : 0;
      }
      double chosen = select_threshold(scores, labels);
      double chosen_f1 = brute_force_f1(scores, labels, chosen).f1;
      for (Eigen::Index i = 0; i < n; ++i) {
        F1Result alt = brute_force_f1(scores, labels, scores[i]);
        CHECK(alt.f1 <= chosen_f1 + 1e-15);
        if (alt.f1 == chosen_f1) CHECK(scores[i] <= chosen);  // ties break upward
      }
    }
  }
}

TEST_CASE("student_t_sf matches frozen high-precision values") {
  // frozen from a 40-digit evaluation of the regularized incomplete beta
  CHECK(student_t_sf(0.5, 4) == doctest::Approx(0.32166498159093164).epsilon(1e-12));
  CHECK(student_t_sf(1.0, 4) == doctest::Approx(0.18695048315002944).epsilon(1e-12));
  CHECK(student_t_sf(2.132, 4) == doctest::Approx(0.049991386369570742).epsilon(1e-12));
  CHECK(student_t_sf(1.5, 3) == doctest::Approx(0.11529193262241153).epsilon(1e-12));
  CHECK(student_t_sf(2.0, 7) == doctest::Approx(0.042809664281488038).epsilon(1e-12));
  CHECK(student_t_sf(3.0, 9) == doctest::Approx(0.0074781819552071074).epsilon(1e-12));
  CHECK(student_t_sf(0.0, 5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(student_t_sf(-1.3, 6) == doctest::Approx(0.87934741268860692).epsilon(1e-12));
}

TEST_CASE("student_t_sf vs the closed-form series across a grid") {
  // the series sanity-checks against one frozen value first
  CHECK(static_cast<double>(t_sf_series(2.132L, 4)) ==
        doctest::Approx(0.049991386369570742).epsilon(1e-14));
  for (int df = 1; df <= 12; ++df) {
    for (double t : {0.0, 0.05, 0.3, 0.7, 1.0, 1.7, 2.5, 4.0, 8.0, 15.0, 40.0, -0.4, -2.2}) {
      double ours = student_t_sf(t, df);
      double reference = static_cast<double>(t_sf_series(static_cast<long double>(t), df));
      CHECK(std::abs(ours - reference) <= 1e-10);
    }
  }
}

TEST_CASE("nb_ttest") {
  SUBCASE("worked example: diffs with mean 0.10") {
    ArrayXd d(5);
    d << 0.10, 0.12, 0.08, 0.11, 0.09;
    TTestResult r = nb_ttest(d, 0.25);
    CHECK(r.t_stat == doctest::Approx(9.428090).epsilon(1e-6));
    CHECK(r.df == 4);
    CHECK(r.p_one_tailed == doctest::Approx(0.000352806471269).epsilon(1e-6));
    CHECK(r.significant_at_05);
    CHECK_FALSE(r.degenerate);
  }

  SUBCASE("all-zero diffs: t = 0, p = 1") {
    ArrayXd d = ArrayXd::Zero(5);
    TTestResult r = nb_ttest(d, 0.25);
    CHECK(r.t_stat == 0.0);
    CHECK(r.p_one_tailed == 1.0);
    CHECK_FALSE(r.significant_at_05);
  }

  SUBCASE("zero variance, nonzero mean: p = 0 with degeneracy flag") {
    ArrayXd d = ArrayXd::Constant(5, 0.2);
    TTestResult r = nb_ttest(d, 0.25);
    CHECK(r.p_one_tailed == 0.0);
    CHECK(r.degenerate);
    CHECK(r.significant_at_05);
  }

  SUBCASE("negating diffs maps p to 1 - p") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      ArrayXd d(6);
      for (int i = 0; i < 6; ++i) d[i] = rng.uniform(-0.2, 0.3);
      if ((d - d.mean()).square().sum() == 0.0) continue;
      TTestResult pos = nb_ttest(d, 0.25);
      TTestResult negated = nb_ttest((-d).eval(), 0.25);
      CHECK(pos.t_stat == doctest::Approx(-negated.t_stat).epsilon(1e-12));
      CHECK(std::abs(pos.p_one_tailed + negated.p_one_tailed - 1.0) < 1e-12);
    }
  }

  SUBCASE("rho = 0 reduces to the classic one-sample t (textbook cross-check)") {
    ArrayXd v1(3);
    v1 << 1.0, 2.0, 3.0;
    TTestResult r1 = nb_ttest(v1, 0.0);
    CHECK(r1.t_stat == doctest::Approx(3.46410161513775).epsilon(1e-12));
    CHECK(r1.p_one_tailed == doctest::Approx(0.0370899501137243).epsilon(1e-10));

    ArrayXd v2(4);
    v2 << 0.5, -0.2, 0.3, 0.1;
    TTestResult r2 = nb_ttest(v2, 0.0);
    CHECK(r2.t_stat == doctest::Approx(1.17210570159049).epsilon(1e-12));
    CHECK(r2.p_one_tailed == doctest::Approx(0.162882855267476).epsilon(1e-10));

    ArrayXd v3(6);
    v3 << 2.0, 2.1, 1.9, 2.05, 1.95, 2.0;
    TTestResult r3 = nb_ttest(v3, 0.0);
    CHECK(r3.t_stat == doctest::Approx(69.2820323027551).epsilon(1e-12));
    CHECK(r3.p_one_tailed == doctest::Approx(5.93200971830622e-9).epsilon(1e-8));
  }

  SUBCASE("fewer than 2 folds rejected") {
    ArrayXd d(1);
    d << 0.1;
    CHECK_THROWS_AS(nb_ttest(d, 0.25), ValidationError);
  }
}

TEST_CASE("run_mccv against the zero-noise oracle mock") {
  synth::SynthConfig sc;
  sc.conversations = 8;
  sc.events_per_conv = 2;
  sc.duration_s = 40.0;
  sc.seed = 5;
  auto data = synth::generate(sc);

  mock::MockConfig mc;
  mc.corpus = data.corpus;
  mc.events = data.events;
  mc.port = 0;
  mock::MockService svc(std::move(mc));
  int port = svc.start();

  detect::DetectorConfig det;
  det.kind = detect::DetectorKind::LmAudio;
  det.endpoint = "http://127.0.0.1:" + std::to_string(port);

  MccvConfig cfg;
  cfg.k = 5;
  cfg.seed = 21;

  EvalReport report = run_mccv(data.corpus, data.events, det, cfg);

  SUBCASE("perfect oracle yields avg F1 = 1.0") {
    CHECK(report.avg_f1 == 1.0);
    CHECK(report.folds.size() == 5);
    for (const auto& f : report.folds) {
      if (f.skipped) continue;
      CHECK(f.metrics.f1 == 1.0);
      CHECK(f.labels.sum() * 10 == (f.labels == 0).count());
    }
  }

  SUBCASE("avg_f1 equals the mean of fold f1 values") {
    double sum = 0;
    int n = 0;
    for (const auto& f : report.folds)
      if (!f.skipped) {
        sum += f.metrics.f1;
        ++n;
      }
    CHECK(report.avg_f1 == doctest::Approx(sum / n).epsilon(1e-12));
  }

  SUBCASE("train and test conversations never overlap") {
    std::vector<std::string> ids;
    for (const auto& c : data.corpus.conversations) ids.push_back(c.id);
    auto plans = make_splits(ids, cfg.k, cfg.test_frac, cfg.seed);
    for (const auto& p : plans) {
      std::set<std::string> train(p.train_conversation_ids.begin(),
                                  p.train_conversation_ids.end());
      for (const auto& id : p.test_conversation_ids) CHECK(train.count(id) == 0);
    }
  }

  SUBCASE("negatives are redrawn per fold for shared test conversations") {
    std::map<std::string, std::map<int, std::set<double>>> negs;
    for (const auto& f : report.folds) {
      if (f.skipped) continue;
      for (const auto& ex : f.test_examples)
        if (ex.label == timeline::Label::Negative)
          negs[ex.conversation_id][f.fold_index].insert(ex.t_s);
    }
    int shared = 0, differing = 0;
    for (const auto& [conv, by_fold] : negs) {
      for (auto a = by_fold.begin(); a != by_fold.end(); ++a)
        for (auto b = std::next(a); b != by_fold.end(); ++b) {
          ++shared;
          if (a->second != b->second) ++differing;
        }
    }
    REQUIRE(shared > 0);
    CHECK(shared == differing);
  }

  SUBCASE("the whole report is reproducible byte for byte") {
    EvalReport again = run_mccv(data.corpus, data.events, det, cfg);
    CHECK(serialize_report(again) == serialize_report(report));
  }

  SUBCASE("report JSON round-trips") {
    EvalReport parsed = parse_report(serialize_report(report));
    CHECK(serialize_report(parsed) == serialize_report(report));
  }

  svc.stop();
}

TEST_CASE("export_finetune") {
  synth::SynthConfig sc;
  sc.conversations = 2;
  sc.events_per_conv = 3;
  sc.duration_s = 40.0;
  sc.seed = 44;
  auto data = synth::generate(sc);
  // written audio, so different windows carry different bytes
  std::string dir =
      (std::filesystem::temp_directory_path() / "hdm_test_finetune").string();
  std::filesystem::remove_all(dir);
  synth::write_to_dir(data, dir);

  timeline::SamplingConfig scfg;
  scfg.seed = 4;
  timeline::Dataset ds = timeline::build_dataset(data.corpus, data.events, scfg);
  REQUIRE(ds.positive_count() == 6);
  AudioStore store(data.corpus, dir);

  SUBCASE("balanced output verified by recount") {
    std::string out = export_finetune(ds, store, 11);
    std::size_t lines = 0, p_lines = 0, n_lines = 0;
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
      ++lines;
      auto j = nlohmann::json::parse(line);
      std::string label = j.at("label").get<std::string>();
      p_lines += label == "P";
      n_lines += label == "N";
      CHECK_FALSE(j.at("audio_b64").get<std::string>().empty());
    }
    CHECK(lines == 12);  // 6 P + 6 N
    CHECK(p_lines == 6);
    CHECK(n_lines == 6);
  }

  SUBCASE("empty dataset gives an empty file") {
    timeline::Dataset empty;
    CHECK(export_finetune(empty, store, 1).empty());
  }

  SUBCASE("deterministic given the seed") {
    CHECK(export_finetune(ds, store, 5) == export_finetune(ds, store, 5));
    CHECK(export_finetune(ds, store, 5) != export_finetune(ds, store, 6));
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("compare_reports") {
  auto mk_report = [](double base_f1, std::uint64_t seed, const std::string& name) {
    EvalReport r;
    r.detector_name = name;
    r.seed = seed;
    r.config.k = 5;
    r.config.test_frac = 0.2;
    r.config_hash = "cafe";
    for (int f = 0; f < 5; ++f) {
      FoldResult fold;
      fold.fold_index = f;
      fold.test_conversation_ids = {"c" + std::to_string(f)};
      fold.metrics.f1 = base_f1 + 0.01 * f;
      fold.scores = ArrayXd::Zero(1);
      fold.labels = LabelsXi::Zero(1);
      r.folds.push_back(fold);
    }
    return r;
  };

  SUBCASE("consistent uplift is significant") {
    auto a = mk_report(0.9, 7, "lm-audio");
    auto b = mk_report(0.5, 7, "hotword");
    TTestResult t = compare_reports(a, b);
    CHECK(t.rho == doctest::Approx(0.25));
    CHECK(t.degenerate);  // identical per-fold gaps -> zero variance
    CHECK(t.significant_at_05);
  }

  SUBCASE("seed mismatch is rejected") {
    auto a = mk_report(0.9, 7, "lm-audio");
    auto b = mk_report(0.5, 8, "hotword");
    CHECK_THROWS_AS(compare_reports(a, b), ValidationError);
  }

  SUBCASE("test-set mismatch is rejected") {
    auto a = mk_report(0.9, 7, "lm-audio");
    auto b = mk_report(0.5, 7, "hotword");
    b.folds[2].test_conversation_ids = {"other"};
    CHECK_THROWS_AS(compare_reports(a, b), ValidationError);
  }
}
