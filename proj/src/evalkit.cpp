#include "trinet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace trinet::eval {

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::acc: return "acc";
    case Metric::f1: return "f1";
    case Metric::auc: return "auc";
    case Metric::precision: return "precision";
    case Metric::sensitivity: return "sensitivity";
    case Metric::specificity: return "specificity";
  }
  return "?";
}

double aggregate_clips(std::span<const double> clip_probs) {
  if (clip_probs.empty()) throw std::invalid_argument("aggregate_clips: no clip probabilities");
  double sum = 0.0;
  for (double p : clip_probs) sum += p;
  return sum / static_cast<double>(clip_probs.size());
}

double rank_auc(std::span<const double> scores, std::span<const int> labels, bool* undefined) {
  if (scores.size() != labels.size()) throw std::invalid_argument("rank_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks; positive rank sum minus its minimum counts the ordered pairs.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    if (undefined) *undefined = true;
    return 0.0;
  }
  if (undefined) *undefined = false;
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(std::span<const Prediction> preds, double threshold) {
  if (preds.empty()) throw std::invalid_argument("compute_metrics: no predictions");
  MetricsReport r;
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(preds.size());
  labels.reserve(preds.size());
  for (const auto& p : preds) {
    if (p.label != 0 && p.label != 1) throw std::invalid_argument("compute_metrics: label must be 0 or 1");
    const bool positive = p.score >= threshold;
    if (p.label == 1) (positive ? r.tp : r.fn)++;
    else (positive ? r.fp : r.tn)++;
    scores.push_back(p.score);
    labels.push_back(p.label);
  }
  auto set = [&](Metric m, double num, double den) {
    const auto i = static_cast<std::size_t>(m);
    r.undefined[i] = den == 0.0;
    r.values[i] = den == 0.0 ? 0.0 : num / den;
  };
  const auto tp = static_cast<double>(r.tp), fp = static_cast<double>(r.fp), tn = static_cast<double>(r.tn),
             fn = static_cast<double>(r.fn);
  set(Metric::acc, tp + tn, tp + tn + fp + fn);
  set(Metric::precision, tp, tp + fp);
  set(Metric::sensitivity, tp, tp + fn);
  set(Metric::specificity, tn, tn + fp);
  // Harmonic mean of precision and sensitivity, written in counts.
  set(Metric::f1, 2.0 * tp, 2.0 * tp + fp + fn);
  bool auc_undefined = false;
  r.values[static_cast<std::size_t>(Metric::auc)] = rank_auc(scores, labels, &auc_undefined);
  r.undefined[static_cast<std::size_t>(Metric::auc)] = auc_undefined;
  return r;
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BootstrapReport bootstrap_ci(std::span<const Prediction> preds, std::size_t resamples, double level, Rng& rng,
                             double threshold) {
  if (preds.size() < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 predictions");
  if (resamples == 0) throw std::invalid_argument("bootstrap_ci: need at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");

  std::array<std::vector<double>, kMetricCount> samples;
  for (auto& s : samples) s.reserve(resamples);
  std::vector<Prediction> draw(preds.size());
  for (std::size_t r = 0; r < resamples; ++r) {
    for (auto& d : draw) d = preds[rng.below(preds.size())];
    const MetricsReport m = compute_metrics(draw, threshold);
    for (std::size_t i = 0; i < kMetricCount; ++i) samples[i].push_back(m.values[i]);
  }

  BootstrapReport out;
  out.resamples = resamples;
  out.level = level;
  const double alpha = 1.0 - level;
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    auto& s = samples[i];
    Interval& iv = out.metrics[i];
    iv.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    std::sort(s.begin(), s.end());
    iv.lower = percentile(s, alpha / 2.0);
    iv.upper = percentile(s, 1.0 - alpha / 2.0);
    iv.half_width = 0.5 * (iv.upper - iv.lower);
  }
  return out;
}

std::size_t FoldAssignment::fold_of(std::string_view patient_id) const {
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (std::find(folds[f].begin(), folds[f].end(), patient_id) != folds[f].end()) return f;
  throw std::out_of_range("fold_of: unknown patient '" + std::string(patient_id) + "'");
}

FoldAssignment kfold_split(std::span<const PatientLabel> patients, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("kfold_split: k must be >= 1");
  if (patients.size() < k)
    throw std::invalid_argument("kfold_split: " + std::to_string(patients.size()) + " patients < k=" +
                                std::to_string(k));
  std::unordered_set<std::string_view> seen;
  std::map<int, std::vector<std::string>> by_label;
  for (const auto& p : patients) {
    if (!seen.insert(p.patient_id).second)
      throw std::invalid_argument("kfold_split: duplicate patient '" + p.patient_id + "'");
    by_label[p.label].push_back(p.patient_id);
  }
  FoldAssignment out;
  out.folds.resize(k);
  std::size_t deal = 0;
  for (auto& [label, ids] : by_label) {
    rng.shuffle(ids.begin(), ids.end());
    for (auto& id : ids) out.folds[deal++ % k].push_back(std::move(id));
  }
  return out;
}

std::vector<std::size_t> balanced_pairs(std::span<const int> labels, Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw std::invalid_argument("balanced_pairs: both classes must be present");
  auto& minority = pos.size() < neg.size() ? pos : neg;
  const auto& majority = pos.size() < neg.size() ? neg : pos;
  std::vector<std::size_t> seq(majority.begin(), majority.end());
  seq.insert(seq.end(), minority.begin(), minority.end());
  for (std::size_t extra = minority.size(); extra < majority.size(); ++extra)
    seq.push_back(minority[rng.below(minority.size())]);
  rng.shuffle(seq.begin(), seq.end());
  return seq;
}

MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / (n - 1.0))};
}

}  // namespace trinet::eval
