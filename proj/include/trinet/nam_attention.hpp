#pragma once

#include <cstddef>
#include <vector>

#include "trinet/tensor.hpp"

namespace trinet::nam {

/// Per-channel batch-norm parameters.
struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;

  /// gamma = 1, beta = 0, mean = 0, var = 1.
  static BnParams identity(std::size_t channels, float eps = 1e-5f);

  std::size_t channels() const { return gamma.size(); }
  void validate() const;
};

struct NamConfig {
  std::size_t channels = 16;
  float eps = 1e-5f;  // pixel-norm stabiliser
};

enum class BnMode { inference, batch_stats };

/// Normalises each channel of a (B, C, ...) tensor. batch_stats pools the
/// mean and (biased) variance over every non-channel axis jointly, so all
/// frames of all clips form one population.
Tensor batch_norm(const Tensor& f, const BnParams& p, BnMode mode = BnMode::inference);

/// sigmoid(BN(F)) * F
Tensor nam_global(const Tensor& f, const BnParams& p, BnMode mode = BnMode::inference);

/// Divides each channel vector by sqrt(mean_c(F^2) + eps) at every
/// (b, t, i, j) position.
Tensor pixel_norm(const Tensor& gated, const NamConfig& cfg);

/// sigmoid(pixel_norm(g)) * g with g = nam_global(x).
Tensor nam_forward(const Tensor& features, const BnParams& p, const NamConfig& cfg,
                   BnMode mode = BnMode::inference);

}  // namespace trinet::nam
