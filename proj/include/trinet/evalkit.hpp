#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trinet/rng.hpp"

namespace trinet::eval {

struct Prediction {
  std::string video_id;
  std::string patient_id;
  int label = 0;       // 1 = malignant
  double score = 0.0;  // malignant probability
};

enum class Metric : std::size_t { acc, f1, auc, precision, sensitivity, specificity };
inline constexpr std::size_t kMetricCount = 6;
std::string_view metric_name(Metric m);

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  /// Indexed by Metric.
  std::array<double, kMetricCount> values{};
  /// True where the ratio had a zero denominator; the value is then 0.
  std::array<bool, kMetricCount> undefined{};

  double get(Metric m) const { return values[static_cast<std::size_t>(m)]; }
  bool is_undefined(Metric m) const { return undefined[static_cast<std::size_t>(m)]; }
  double acc() const { return get(Metric::acc); }
  double f1() const { return get(Metric::f1); }
  double auc() const { return get(Metric::auc); }
  double precision() const { return get(Metric::precision); }
  double sensitivity() const { return get(Metric::sensitivity); }
  double specificity() const { return get(Metric::specificity); }
  double balanced_accuracy() const { return 0.5 * (sensitivity() + specificity()); }
};

/// Mean of the clip probabilities.
double aggregate_clips(std::span<const double> clip_probs);

/// Confusion matrix at `threshold` (score >= threshold => malignant) and the
/// six metrics. AUC is the Mann-Whitney statistic with ties counted 1/2.
MetricsReport compute_metrics(std::span<const Prediction> preds, double threshold = 0.5);

/// Fraction of (positive, negative) pairs ranked correctly, ties 1/2.
/// Sort-based, O(n log n). Undefined (returns 0, sets flag) if a class is absent.
double rank_auc(std::span<const double> scores, std::span<const int> labels, bool* undefined = nullptr);

struct Interval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double half_width = 0.0;
};

struct BootstrapReport {
  std::array<Interval, kMetricCount> metrics{};
  std::size_t resamples = 0;
  double level = 0.95;

  const Interval& get(Metric m) const { return metrics[static_cast<std::size_t>(m)]; }
};

/// Resamples predictions with replacement; percentile interval at
/// (1-level)/2 and 1-(1-level)/2 (linear interpolation between order stats).
BootstrapReport bootstrap_ci(std::span<const Prediction> preds, std::size_t resamples, double level, Rng& rng,
                             double threshold = 0.5);

struct PatientLabel {
  std::string patient_id;
  int label = 0;
};

struct FoldAssignment {
  std::vector<std::vector<std::string>> folds;  // patient ids per fold

  std::size_t fold_of(std::string_view patient_id) const;  // throws if absent
};

/// Stratified patient-level k-fold: each class is shuffled and dealt
/// round-robin, continuing the deal position across classes.
FoldAssignment kfold_split(std::span<const PatientLabel> patients, std::size_t k, Rng& rng);

/// Indices into `labels` for one balanced epoch: the majority class once
/// each, the minority class once each plus draws with replacement up to the
/// majority count; shuffled.
std::vector<std::size_t> balanced_pairs(std::span<const int> labels, Rng& rng);

/// Mean and sample standard deviation.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> xs);

}  // namespace trinet::eval
