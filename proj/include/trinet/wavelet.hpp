#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "trinet/backbone.hpp"
#include "trinet/layers.hpp"
#include "trinet/tensor.hpp"

namespace trinet::wavelet {

/// The four orthonormal 2x2 Haar analysis kernels, row-major:
///   LL = 1/2 [ 1  1;  1  1]    LH = 1/2 [ 1 -1;  1 -1]
///   HL = 1/2 [ 1  1; -1 -1]    HH = 1/2 [ 1 -1; -1  1]
namespace haar {
using Kernel = std::array<float, 4>;
inline constexpr Kernel ll{0.5f, 0.5f, 0.5f, 0.5f};
inline constexpr Kernel lh{0.5f, -0.5f, 0.5f, -0.5f};
inline constexpr Kernel hl{0.5f, 0.5f, -0.5f, -0.5f};
inline constexpr Kernel hh{0.5f, -0.5f, -0.5f, 0.5f};
/// Band order used everywhere: LL, LH, HL, HH.
inline constexpr std::array<Kernel, 4> filters{ll, lh, hl, hh};
}  // namespace haar

struct HaarBands {
  Tensor ll, lh, hl, hh;
};

/// Stride-2 depth-wise correlation with the Haar kernels over the last two
/// axes. Any leading axes (C, or N x C) are treated as independent planes.
HaarBands haar_decompose(const Tensor& x);
/// Transposed stride-2 convolution with the same kernels; exact inverse of
/// haar_decompose.
Tensor haar_reconstruct(const Tensor& ll, const Tensor& lh, const Tensor& hl, const Tensor& hh);
inline Tensor haar_reconstruct(const HaarBands& b) { return haar_reconstruct(b.ll, b.lh, b.hl, b.hh); }

struct DetailBands {
  Tensor lh, hl, hh;
};

/// levels[i] holds the detail bands of decomposition level i + 1; `top_ll`
/// is the LL band of the deepest level (the input itself when depth is 0).
struct WaveletPyramid {
  std::vector<DetailBands> levels;
  Tensor top_ll;

  std::size_t depth() const { return levels.size(); }
};

WaveletPyramid multilevel_decompose(const Tensor& x, std::size_t levels);

enum class HfInit { seeded, identity, zero };

struct WtcrParams {
  std::size_t levels = 2;                 // M
  std::vector<nn::ConvParams> hf;         // one 3x3 conv (3C -> 3C) per level
  backbone::SpatioTemporalParams rstn;

  static WtcrParams init(Rng& rng, const backbone::PipelineShape& shape, std::size_t levels, HfInit hf_init,
                         float bias_range);
};

/// Stacks (LH, HL, HH) along channels, applies one same-padded 3x3 conv and
/// splits the result back into three C-channel groups. Bands are (C, h, w)
/// or (N, C, h, w).
DetailBands hf_conv(const DetailBands& bands, const nn::ConvParams& weights);

/// X^(M) is the stored top LL; each step up replaces the level's raw detail
/// bands with their hf_conv output and inverts one Haar level.
Tensor wtcr_reconstruct(const WaveletPyramid& pyramid, const WtcrParams& params);

/// Per-frame decompose / process / reconstruct, then the RSTN.
/// (B, C, T, H, W) -> frequency features of shape (B, C_f, T, H/8, W/8).
Tensor wtcr_forward(const Tensor& clip, const WtcrParams& params);

/// Mean energy of the level-1 detail bands (LH + HL + HH), per element of x.
double detail_energy(const Tensor& x);

}  // namespace trinet::wavelet
