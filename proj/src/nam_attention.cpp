#include "trinet/nam_attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trinet::nam {

namespace {

void check_channels(const Tensor& f, std::size_t channels, const char* where) {
  if (f.rank() < 2) throw std::invalid_argument(std::string(where) + ": need (B, C, ...)");
  if (f.dim(1) != channels)
    throw std::invalid_argument(std::string(where) + ": tensor has " + std::to_string(f.dim(1)) +
                                " channels, expected " + std::to_string(channels));
}

}  // namespace

BnParams BnParams::identity(std::size_t channels, float eps) {
  BnParams p;
  p.gamma.assign(channels, 1.0f);
  p.beta.assign(channels, 0.0f);
  p.running_mean.assign(channels, 0.0f);
  p.running_var.assign(channels, 1.0f);
  p.eps = eps;
  return p;
}

void BnParams::validate() const {
  const auto c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
    throw std::invalid_argument("BnParams: per-channel vectors differ in length");
  if (!(eps > 0.0f)) throw std::invalid_argument("BnParams: eps must be > 0");
  for (float v : running_var)
    if (v < 0.0f) throw std::invalid_argument("BnParams: negative running variance");
}

Tensor batch_norm(const Tensor& f, const BnParams& p, BnMode mode) {
  p.validate();
  check_channels(f, p.channels(), "batch_norm");
  const std::size_t batch = f.dim(0), channels = f.dim(1);
  const std::size_t inner = f.size() / (batch * channels);
  Tensor out = f;
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = p.running_mean[c];
    double var = p.running_var[c];
    if (mode == BnMode::batch_stats) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const float* src = f.data() + (b * channels + c) * inner;
        for (std::size_t s = 0; s < inner; ++s) sum += src[s];
      }
      const double n = static_cast<double>(batch * inner);
      mean = sum / n;
      for (std::size_t b = 0; b < batch; ++b) {
        const float* src = f.data() + (b * channels + c) * inner;
        for (std::size_t s = 0; s < inner; ++s) sq += (src[s] - mean) * (src[s] - mean);
      }
      var = sq / n;
    }
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(p.eps));
    const double g = p.gamma[c], beta = p.beta[c];
    for (std::size_t b = 0; b < batch; ++b) {
      float* dst = out.data() + (b * channels + c) * inner;
      for (std::size_t s = 0; s < inner; ++s) dst[s] = static_cast<float>((dst[s] - mean) * inv_std * g + beta);
    }
  }
  return out;
}

Tensor nam_global(const Tensor& f, const BnParams& p, BnMode mode) {
  return multiply(sigmoid(batch_norm(f, p, mode)), f);
}

Tensor pixel_norm(const Tensor& gated, const NamConfig& cfg) {
  if (!(cfg.eps > 0.0f)) throw std::invalid_argument("pixel_norm: eps must be > 0");
  check_channels(gated, cfg.channels, "pixel_norm");
  const std::size_t batch = gated.dim(0), channels = gated.dim(1);
  const std::size_t inner = gated.size() / (batch * channels);
  Tensor out = gated;
  for (std::size_t b = 0; b < batch; ++b) {
    float* base = out.data() + b * channels * inner;
    for (std::size_t s = 0; s < inner; ++s) {
      double sq = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = base[c * inner + s];
        sq += v * v;
      }
      const double denom = std::sqrt(sq / static_cast<double>(channels) + cfg.eps);
      for (std::size_t c = 0; c < channels; ++c)
        base[c * inner + s] = static_cast<float>(base[c * inner + s] / denom);
    }
  }
  return out;
}

Tensor nam_forward(const Tensor& features, const BnParams& p, const NamConfig& cfg, BnMode mode) {
  const Tensor gated = nam_global(features, p, mode);
  return multiply(sigmoid(pixel_norm(gated, cfg)), gated);
}

}  // namespace trinet::nam
