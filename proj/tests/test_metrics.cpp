#include <cmath>

#include "doctest.h"
#include "fadet/metrics.hpp"
#include "fadet/rng.hpp"

using namespace fadet;

namespace {

// Exhaustive pair-counting AUC: (#concordant + 0.5 * #ties) / #pairs.
double pair_count_auc(const ScoredSet& set) {
  double wins = 0.0;
  int64_t pairs = 0;
  for (const auto& a : set.samples) {
    if (!a.is_live) continue;
    for (const auto& b : set.samples) {
      if (b.is_live) continue;
      pairs++;
      if (a.score > b.score) wins += 1.0;
      else if (a.score == b.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

ScoredSet six_sample_set() {
  // live {0.9, 0.8, 0.4}, fake {0.6, 0.3, 0.1}
  return {{{0.9, true}, {0.8, true}, {0.4, true},
           {0.6, false}, {0.3, false}, {0.1, false}}};
}

ScoredSet random_set(Rng& rng, int64_t n) {
  ScoredSet set;
  for (int64_t i = 0; i < n; ++i) {
    // coarse quantization provokes ties
    double score = std::round(rng.uniform(0.0, 1.0) * 20.0) / 20.0;
    set.samples.push_back({score, rng.uniform() < 0.5});
  }
  // ensure both classes exist
  set.samples.push_back({rng.uniform(), true});
  set.samples.push_back({rng.uniform(), false});
  return set;
}

}  // namespace

TEST_CASE("perfect separation gives ACER 0, ACC 1, AUC 1, EER 0") {
  ScoredSet set{{{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}}};
  ThresholdMetrics tm = acer_acc(set, 0.5);
  CHECK(tm.acer == 0.0);
  CHECK(tm.acc == 1.0);
  RocMetrics roc = roc_metrics(set);
  CHECK(roc.auc == 1.0);
  CHECK(roc.eer == 0.0);
  CHECK(roc.tpr_at_fpr(0.01) == 1.0);
}

TEST_CASE("all predictions flipped gives ACER 1") {
  ScoredSet set{{{0.1, true}, {0.2, true}, {0.8, false}, {0.9, false}}};
  ThresholdMetrics tm = acer_acc(set, 0.5);
  CHECK(tm.acer == 1.0);
  CHECK(tm.acc == 0.0);
}

TEST_CASE("hand-counted six sample set at threshold 0.5") {
  ThresholdMetrics tm = acer_acc(six_sample_set(), 0.5);
  CHECK(tm.apcer == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(tm.bpcer == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(tm.acer == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(tm.acc == doctest::Approx(2.0 / 3).epsilon(1e-15));
}

TEST_CASE("six sample AUC equals the 8/9 pair-count value") {
  RocMetrics roc = roc_metrics(six_sample_set());
  CHECK(roc.auc == doctest::Approx(8.0 / 9).epsilon(1e-12));
  CHECK(pair_count_auc(six_sample_set()) == doctest::Approx(8.0 / 9));
}

TEST_CASE("identical scores give AUC one half") {
  ScoredSet set{{{0.5, true}, {0.5, true}, {0.5, false}, {0.5, false}}};
  CHECK(roc_metrics(set).auc == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trapezoid AUC equals pair counting on random sets") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    ScoredSet set = random_set(rng, 3 + rng.uniform_int(0, 197));
    double fast = roc_metrics(set).auc;
    double slow = pair_count_auc(set);
    CHECK(std::fabs(fast - slow) < 1e-12);
  }
}

TEST_CASE("metrics are invariant under strictly increasing score transforms") {
  Rng rng(72);
  ScoredSet set = random_set(rng, 60);
  RocMetrics base = roc_metrics(set);
  ScoredSet warped = set;
  for (auto& s : warped.samples) s.score = std::exp(3.0 * s.score) + 1.0;
  RocMetrics after = roc_metrics(warped);
  CHECK(after.auc == doctest::Approx(base.auc).epsilon(1e-12));
  CHECK(after.eer == doctest::Approx(base.eer).epsilon(1e-12));

  double thr = 0.4;
  ThresholdMetrics tm1 = acer_acc(set, thr);
  ThresholdMetrics tm2 = acer_acc(warped, std::exp(3.0 * thr) + 1.0);
  CHECK(tm1.acer == tm2.acer);
  CHECK(tm1.acc == tm2.acc);
}

TEST_CASE("eer threshold balances the two error rates") {
  Rng rng(73);
  for (int trial = 0; trial < 50; ++trial) {
    ScoredSet set = random_set(rng, 80);
    RocMetrics roc = roc_metrics(set);
    ThresholdMetrics tm = acer_acc(set, roc.eer_threshold);
    // interpolation gap: largest step between adjacent operating points
    double gap = 0.0;
    for (size_t k = 1; k < roc.fpr.size(); ++k) {
      gap = std::max(gap, std::fabs(roc.fpr[k] - roc.fpr[k - 1]) +
                              std::fabs(roc.tpr[k] - roc.tpr[k - 1]));
    }
    CHECK(std::fabs(tm.apcer - tm.bpcer) <= gap + 1e-12);
  }
}

TEST_CASE("degenerate single-class input is rejected") {
  ScoredSet all_live{{{0.5, true}, {0.7, true}}};
  CHECK_THROWS_AS(acer_acc(all_live, 0.5), ContractError);
  CHECK_THROWS_AS(roc_metrics(all_live), ContractError);
}

TEST_CASE("tpr_at_fpr interpolates between operating points") {
  // live at {0.9, 0.7}, fake at {0.8, 0.2}: curve (0,0)->(0,.5)->(.5,.5)->(.5,1)->(1,1)
  ScoredSet set{{{0.9, true}, {0.7, true}, {0.8, false}, {0.2, false}}};
  RocMetrics roc = roc_metrics(set);
  CHECK(roc.tpr_at_fpr(0.25) == doctest::Approx(0.5));
  CHECK(roc.tpr_at_fpr(0.75) == doctest::Approx(1.0));
}

TEST_CASE("json report carries the documented keys") {
  std::string json = metrics_report_json(six_sample_set(), 0.5);
  for (const char* key : {"acer", "acc", "auc", "eer", "tpr_at_fpr", "0.10",
                          "0.01", "threshold", "n_live", "n_fake"}) {
    CHECK(json.find(key) != std::string::npos);
  }
}
