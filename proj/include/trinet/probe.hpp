#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "trinet/evalkit.hpp"
#include "trinet/tensor.hpp"

namespace trinet::probe {

/// Row-major feature matrix.
struct Features {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

Features from_tensor(const Tensor& pooled);  // (B, C) -> B x C

struct TrainOptions {
  double learning_rate = 0.1;
  std::size_t epochs = 500;
  double l2 = 1e-4;
};

struct ProbeParams {
  std::vector<double> weights;
  double bias = 0.0;
  TrainOptions options;
};

/// Global average over (T, H', W'): (B, C_f, T, H', W') -> (B, C_f).
Tensor pool_features(const Tensor& branch_output);

/// Mean binary cross-entropy plus (l2 / 2) * ||w||^2. The bias is not
/// regularised.
double loss(const ProbeParams& p, const Features& x, std::span<const int> y);

struct Gradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Analytic gradient of `loss`: X^T (sigmoid(Xw + b) - y) / n + l2 * w.
Gradient gradient(const ProbeParams& p, const Features& x, std::span<const int> y);

std::vector<double> predict_proba(const ProbeParams& p, const Features& x);

/// Full-batch gradient descent from zero weights. `loss_log`, when given,
/// receives the loss before each update and after the last one (epochs + 1
/// entries).
ProbeParams train_logistic(const Features& x, std::span<const int> y, const TrainOptions& opts,
                           std::vector<double>* loss_log = nullptr);

eval::MetricsReport evaluate_probe(const ProbeParams& p, const Features& x, std::span<const int> y,
                                   double threshold = 0.5);

/// Per-column z-scoring fitted on one set and applied to others.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Features& x);
  Features apply(const Features& x) const;
};

/// Weights as a (C + 1) TNSR vector (bias last) plus `<stem>.json`.
void save_probe(const ProbeParams& p, const Standardizer& z, const std::filesystem::path& stem);

}  // namespace trinet::probe
