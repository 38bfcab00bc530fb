#include "fadet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace fadet {

int64_t ScoredSet::count_live() const {
  int64_t n = 0;
  for (const auto& s : samples) n += s.is_live ? 1 : 0;
  return n;
}

int64_t ScoredSet::count_fake() const {
  return static_cast<int64_t>(samples.size()) - count_live();
}

namespace {

void require_both_classes(const ScoredSet& set, const char* who) {
  if (set.count_live() == 0 || set.count_fake() == 0) {
    throw ContractError(std::string(who) +
                        " needs at least one sample of each class");
  }
  for (const auto& s : set.samples) {
    if (!std::isfinite(s.score)) {
      throw ContractError(std::string(who) + " got a non-finite score");
    }
  }
}

}  // namespace

ThresholdMetrics acer_acc(const ScoredSet& set, double threshold) {
  require_both_classes(set, "acer_acc");
  if (!std::isfinite(threshold)) throw ContractError("non-finite threshold");
  int64_t live_total = 0, fake_total = 0, live_rejected = 0, fake_accepted = 0;
  for (const auto& s : set.samples) {
    bool predicted_live = s.score >= threshold;
    if (s.is_live) {
      live_total++;
      if (!predicted_live) live_rejected++;
    } else {
      fake_total++;
      if (predicted_live) fake_accepted++;
    }
  }
  ThresholdMetrics m;
  m.threshold = threshold;
  m.apcer = static_cast<double>(fake_accepted) / fake_total;
  m.bpcer = static_cast<double>(live_rejected) / live_total;
  m.acer = 0.5 * (m.apcer + m.bpcer);
  m.acc = static_cast<double>(set.samples.size() - live_rejected - fake_accepted) /
          static_cast<double>(set.samples.size());
  return m;
}

RocMetrics roc_metrics(const ScoredSet& set) {
  require_both_classes(set, "roc_metrics");
  const double n_live = static_cast<double>(set.count_live());
  const double n_fake = static_cast<double>(set.count_fake());

  // Sweep thresholds over distinct scores, descending; tied scores move both
  // rates in one step, which makes the trapezoid rule count ties as half.
  std::vector<ScoredSample> sorted = set.samples;
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) {
              return a.score > b.score;
            });

  RocMetrics roc;
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  int64_t live_seen = 0, fake_seen = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    double score = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == score) {
      if (sorted[i].is_live) live_seen++;
      else fake_seen++;
      ++i;
    }
    roc.fpr.push_back(fake_seen / n_fake);
    roc.tpr.push_back(live_seen / n_live);
    roc.thresholds.push_back(score);
  }

  for (size_t k = 1; k < roc.fpr.size(); ++k) {
    roc.auc += 0.5 * (roc.fpr[k] - roc.fpr[k - 1]) * (roc.tpr[k] + roc.tpr[k - 1]);
  }

  // EER: walk the polyline until FAR >= FRR, then solve on that segment.
  roc.eer = 0.0;
  roc.eer_threshold = roc.thresholds.back();
  for (size_t k = 0; k < roc.fpr.size(); ++k) {
    double far = roc.fpr[k];
    double frr = 1.0 - roc.tpr[k];
    if (far >= frr) {
      if (k == 0) {
        roc.eer = far;
        roc.eer_threshold = roc.thresholds[k];
      } else {
        double far0 = roc.fpr[k - 1], frr0 = 1.0 - roc.tpr[k - 1];
        double dfar = far - far0, dfrr = frr - frr0;
        double denom = dfar - dfrr;
        double t = std::fabs(denom) < 1e-300 ? 0.0 : (frr0 - far0) / denom;
        t = std::clamp(t, 0.0, 1.0);
        roc.eer = far0 + t * dfar;
        roc.eer_threshold =
            roc.thresholds[k - 1] +
            t * (roc.thresholds[k] - roc.thresholds[k - 1]);
      }
      break;
    }
  }
  if (!std::isfinite(roc.eer_threshold)) roc.eer_threshold = roc.thresholds[1];
  return roc;
}

double RocMetrics::tpr_at_fpr(double target_fpr) const {
  if (target_fpr <= 0.0) {
    // topmost point of the vertical run at fpr == 0
    double best = 0.0;
    for (size_t k = 0; k < fpr.size() && fpr[k] == 0.0; ++k) best = tpr[k];
    return best;
  }
  if (target_fpr >= 1.0) return 1.0;
  for (size_t k = 1; k < fpr.size(); ++k) {
    if (fpr[k] >= target_fpr) {
      if (fpr[k] == fpr[k - 1]) return std::max(tpr[k], tpr[k - 1]);
      double t = (target_fpr - fpr[k - 1]) / (fpr[k] - fpr[k - 1]);
      return tpr[k - 1] + t * (tpr[k] - tpr[k - 1]);
    }
  }
  return 1.0;
}

std::string metrics_report_json(const ScoredSet& set, double threshold) {
  ThresholdMetrics tm = acer_acc(set, threshold);
  RocMetrics roc = roc_metrics(set);
  nlohmann::json j;
  j["acer"] = tm.acer;
  j["acc"] = tm.acc;
  j["apcer"] = tm.apcer;
  j["bpcer"] = tm.bpcer;
  j["auc"] = roc.auc;
  j["eer"] = roc.eer;
  j["tpr_at_fpr"] = {{"0.10", roc.tpr_at_fpr(0.10)},
                     {"0.01", roc.tpr_at_fpr(0.01)}};
  j["threshold"] = threshold;
  j["n_live"] = set.count_live();
  j["n_fake"] = set.count_fake();
  return j.dump(2);
}

}  // namespace fadet
