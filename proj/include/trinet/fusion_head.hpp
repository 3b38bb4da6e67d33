#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include "trinet/backbone.hpp"
#include "trinet/layers.hpp"
#include "trinet/nam_attention.hpp"
#include "trinet/wavelet.hpp"

namespace trinet::fusion {

/// Channel projections (1x1x1 convs) and the classification head.
struct FusionParams {
  nn::ConvParams up1;    // C_f  -> 2C_f
  nn::ConvParams up2;    // 2C_f -> 3C_f
  nn::ConvParams down1;  // 3C_f -> 2C_f
  nn::ConvParams down2;  // 2C_f -> C_f
  nn::ConvParams head_conv;  // C_f -> 2C_f
  nam::BnParams head_bn;     // identity unless loaded
  nn::LinearParams fc;       // 2C_f -> 2

  static FusionParams init(Rng& rng, std::size_t channels, float bias_range);
};

Tensor channel_project(const Tensor& x, const nn::ConvParams& proj);

/// Intermediate tensors of the top-down fusion, in evaluation order.
struct FusionTrace {
  Tensor paired;   // concat(spatiotemporal, attended)
  Tensor lifted;   // paired + up1(spatiotemporal)
  Tensor merged;   // up2(lifted) + concat(all three)
  Tensor refined;  // down1(merged) + paired
  Tensor fused;    // down2(refined) + spatiotemporal
};

FusionTrace pyramid_fuse_trace(const Tensor& spatiotemporal, const Tensor& attended, const Tensor& frequency, const FusionParams& p);
Tensor pyramid_fuse(const Tensor& spatiotemporal, const Tensor& attended, const Tensor& frequency, const FusionParams& p);

/// Head conv, BN, ReLU, global average over (T, H', W'), FC. Returns (B, 2)
/// logits, column 1 = malignant.
Tensor classify(const Tensor& fused, const FusionParams& p);

/// Softmax probability of class 1 for each row of (B, 2) logits.
std::vector<double> malignant_probability(const Tensor& logits);

/// Seeded initialisation settings.
struct InitOptions {
  std::uint64_t seed = 7;
  std::size_t levels = 2;  // M
  wavelet::HfInit hf_init = wavelet::HfInit::seeded;
  float bias_range = 0.05f;
};

/// Every weight of the three-branch network.
struct ModelParams {
  backbone::PipelineShape shape;
  backbone::SpatioTemporalParams backbone;
  backbone::StubEncoderParams encoder;
  nam::BnParams nam_bn;
  nam::NamConfig nam_cfg;
  wavelet::WtcrParams wtcr;
  FusionParams fusion;

  /// Each sub-module draws from its own seed: derive_seed(seed, seed_domain::*).
  static ModelParams init(const backbone::PipelineShape& shape, const InitOptions& opts);

  /// Visits every tensor with a stable dotted name.
  void for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

struct BranchFeatures {
  Tensor spatiotemporal, attended, frequency;
};

BranchFeatures branch_features(const Tensor& clip, const ModelParams& params,
                               const backbone::FrameFeatureProvider& provider,
                               std::span<const backbone::ClipKey> keys = {});

/// backbone -> spatiotemporal, provider + attention -> attended, wavelet -> frequency, fusion, head.
Tensor forward(const Tensor& clip, const ModelParams& params, const backbone::FrameFeatureProvider& provider,
               std::span<const backbone::ClipKey> keys = {});

/// Writes one TNSR blob per tensor into `dir` plus `dir/model.json`.
void save_model(const ModelParams& params, const std::filesystem::path& dir);
/// Reads a manifest written by save_model; every blob must exist and match
/// the dims implied by the manifest config.
ModelParams load_model(const std::filesystem::path& manifest);

}  // namespace trinet::fusion
