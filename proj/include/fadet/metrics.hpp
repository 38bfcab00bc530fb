#pragma once

#include <string>
#include <vector>

#include "fadet/tensor.hpp"

namespace fadet {

/// Scored predictions; higher score means more live.
struct ScoredSample {
  double score = 0.0;
  bool is_live = false;
};

struct ScoredSet {
  std::vector<ScoredSample> samples;

  int64_t count_live() const;
  int64_t count_fake() const;
};

struct ThresholdMetrics {
  double apcer = 0.0;  // fake accepted as live
  double bpcer = 0.0;  // live rejected as fake
  double acer = 0.0;
  double acc = 0.0;
  double threshold = 0.0;
};

/// Threshold rule: predict live iff score >= threshold.
ThresholdMetrics acer_acc(const ScoredSet& set, double threshold);

struct RocMetrics {
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  // operating points swept over distinct scores, fpr/tpr nondecreasing
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;

  /// Linear interpolation on the ROC polyline.
  double tpr_at_fpr(double target_fpr) const;
};

/// Trapezoid AUC over all distinct thresholds, EER at the FAR=FRR crossing
/// with linear interpolation. Both classes must be present.
RocMetrics roc_metrics(const ScoredSet& set);

/// Full report serialized as JSON (keys: acer, acc, auc, eer, tpr_at_fpr,
/// threshold, n_live, n_fake).
std::string metrics_report_json(const ScoredSet& set, double threshold);

}  // namespace fadet
