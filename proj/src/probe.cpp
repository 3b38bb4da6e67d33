#include "trinet/probe.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "trinet/layers.hpp"

namespace trinet::probe {

namespace {

double sigmoid_d(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_inputs(const ProbeParams& p, const Features& x, std::span<const int> y) {
  if (x.rows != y.size()) throw std::invalid_argument("probe: feature rows and labels differ in count");
  if (p.weights.size() != x.cols) throw std::invalid_argument("probe: weight length does not match features");
}

double logit(const ProbeParams& p, std::span<const double> row) {
  double z = p.bias;
  for (std::size_t j = 0; j < row.size(); ++j) z += p.weights[j] * row[j];
  return z;
}

}  // namespace

Features from_tensor(const Tensor& pooled) {
  nn::require_rank(pooled, 2, "probe::from_tensor");
  Features f;
  f.rows = pooled.dim(0);
  f.cols = pooled.dim(1);
  f.data.assign(pooled.values().begin(), pooled.values().end());
  return f;
}

Tensor pool_features(const Tensor& branch_output) {
  nn::require_rank(branch_output, 5, "pool_features");
  return nn::global_average(branch_output);
}

double loss(const ProbeParams& p, const Features& x, std::span<const int> y) {
  check_inputs(p, x, y);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double z = logit(p, x.row(i));
    // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
    total += softplus(z) - (y[i] == 1 ? z : 0.0);
  }
  double reg = 0.0;
  for (double w : p.weights) reg += w * w;
  return total / static_cast<double>(x.rows) + 0.5 * p.options.l2 * reg;
}

Gradient gradient(const ProbeParams& p, const Features& x, std::span<const int> y) {
  check_inputs(p, x, y);
  Gradient g;
  g.weights.assign(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    const double err = sigmoid_d(logit(p, row)) - (y[i] == 1 ? 1.0 : 0.0);
    for (std::size_t j = 0; j < x.cols; ++j) g.weights[j] += err * row[j];
    g.bias += err;
  }
  const double n = static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) g.weights[j] = g.weights[j] / n + p.options.l2 * p.weights[j];
  g.bias /= n;
  return g;
}

std::vector<double> predict_proba(const ProbeParams& p, const Features& x) {
  if (p.weights.size() != x.cols) throw std::invalid_argument("probe: weight length does not match features");
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = sigmoid_d(logit(p, x.row(i)));
  return out;
}

ProbeParams train_logistic(const Features& x, std::span<const int> y, const TrainOptions& opts,
                           std::vector<double>* loss_log) {
  if (x.rows < 2) throw std::invalid_argument("train_logistic: need at least 2 examples");
  bool has_pos = false, has_neg = false;
  for (int v : y) (v == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw std::invalid_argument("train_logistic: both classes must be present");

  ProbeParams p;
  p.options = opts;
  p.weights.assign(x.cols, 0.0);
  if (loss_log) loss_log->clear();
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (loss_log) loss_log->push_back(loss(p, x, y));
    const Gradient g = gradient(p, x, y);
    for (std::size_t j = 0; j < x.cols; ++j) p.weights[j] -= opts.learning_rate * g.weights[j];
    p.bias -= opts.learning_rate * g.bias;
  }
  if (loss_log) loss_log->push_back(loss(p, x, y));
  for (double w : p.weights)
    if (!std::isfinite(w)) throw std::runtime_error("train_logistic: weights diverged");
  return p;
}

eval::MetricsReport evaluate_probe(const ProbeParams& p, const Features& x, std::span<const int> y,
                                   double threshold) {
  if (x.rows != y.size()) throw std::invalid_argument("evaluate_probe: rows and labels differ in count");
  const auto probs = predict_proba(p, x);
  std::vector<eval::Prediction> preds(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    preds[i].video_id = std::to_string(i);
    preds[i].label = y[i];
    preds[i].score = probs[i];
  }
  return eval::compute_metrics(preds, threshold);
}

Standardizer Standardizer::fit(const Features& x) {
  Standardizer z;
  z.mean.assign(x.cols, 0.0);
  z.scale.assign(x.cols, 1.0);
  if (x.rows == 0) return z;
  for (std::size_t j = 0; j < x.cols; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) m += x.at(i, j);
    m /= static_cast<double>(x.rows);
    double v = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) v += (x.at(i, j) - m) * (x.at(i, j) - m);
    v /= static_cast<double>(x.rows);
    z.mean[j] = m;
    // Constant columns pass through centred but unscaled.
    z.scale[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
  }
  return z;
}

Features Standardizer::apply(const Features& x) const {
  if (x.cols != mean.size()) throw std::invalid_argument("Standardizer: column count mismatch");
  Features out = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out.data[i * x.cols + j] = (x.at(i, j) - mean[j]) / scale[j];
  return out;
}

void save_probe(const ProbeParams& p, const Standardizer& z, const std::filesystem::path& stem) {
  std::vector<float> flat(p.weights.begin(), p.weights.end());
  flat.push_back(static_cast<float>(p.bias));
  const std::size_t n = flat.size();
  const Tensor t({n}, layout::generic(1), std::move(flat));
  auto blob = stem;
  blob += ".tnsr";
  save(t, blob);
  nlohmann::json j = {{"format", "trinet-probe"},
                      {"weights_file", blob.filename().string()},
                      {"dims", t.dims()},
                      {"weights", p.weights},
                      {"bias", p.bias},
                      {"standardize_mean", z.mean},
                      {"standardize_scale", z.scale},
                      {"learning_rate", p.options.learning_rate},
                      {"epochs", p.options.epochs},
                      {"l2", p.options.l2}};
  auto manifest = stem;
  manifest += ".json";
  std::ofstream os(manifest);
  if (!os) throw std::runtime_error("save_probe: cannot write " + manifest.string());
  os << j.dump(2) << '\n';
}

}  // namespace trinet::probe
