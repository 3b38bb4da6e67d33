#pragma once

#include <cstddef>
#include <string>

#include "trinet/rng.hpp"
#include "trinet/tensor.hpp"

// Dense reference kernels shared by the branches. All convolutions use
// cross-correlation (no kernel flip), zero padding, and accumulate in double.
namespace trinet::nn {

/// Convolution weights.
///   2-D:        weight (C_out, C_in / groups, k, k)
///   temporal:   weight (C_out, C_in / groups, k_t)      -- kernel k_t x 1 x 1
///   pointwise:  weight (C_out, C_in)                     -- kernel 1 x 1 x 1
/// bias is (C_out).
struct ConvParams {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1) * groups; }
};

/// Fully connected layer: weight (out, in), bias (out).
struct LinearParams {
  Tensor weight;
  Tensor bias;
};

/// Fan-in scaled uniform init: weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases in [-bias_range, bias_range) (exactly zero when bias_range == 0).
ConvParams init_conv2d(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t groups, float bias_range);
ConvParams init_temporal(Rng& rng, std::size_t channels, std::size_t k_t, std::size_t groups,
                         float bias_range);
ConvParams init_pointwise(Rng& rng, std::size_t c_in, std::size_t c_out, float bias_range);
LinearParams init_linear(Rng& rng, std::size_t in, std::size_t out, float bias_range);

/// 2-D kernel whose only nonzero tap is the centre of each channel's own
/// filter; with same padding the convolution is the identity map.
ConvParams identity_conv2d(std::size_t channels, std::size_t k);
ConvParams identity_pointwise(std::size_t channels);

/// x: (N, C_in, H, W) -> (N, C_out, H_out, W_out)
Tensor conv2d(const Tensor& x, const ConvParams& p);
/// x: (B, C_in, T, H, W) -> (B, C_out, T, H, W); same temporal padding.
Tensor conv_temporal(const Tensor& x, const ConvParams& p);
/// x: (B, C_in, T, H, W) -> (B, C_out, T, H, W)
Tensor conv_pointwise(const Tensor& x, const ConvParams& p);
/// 3-D max pooling with kernel 1x3x3, stride 1, same padding.
Tensor max_pool_1x3x3(const Tensor& x);
/// x: (B, in) -> (B, out)
Tensor linear(const Tensor& x, const LinearParams& p);

/// (B, C, T, H, W) -> (B*T, C, H, W)
Tensor clip_to_frames(const Tensor& clip);
/// (B*T, C, H, W) -> (B, C, T, H, W)
Tensor frames_to_clip(const Tensor& frames, std::size_t batch);

/// Mean over every axis after the channel axis: (B, C, ...) -> (B, C).
Tensor global_average(const Tensor& x);

void require_rank(const Tensor& t, std::size_t rank, const std::string& where);

}  // namespace trinet::nn
