#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trinet/layers.hpp"
#include "trinet/rng.hpp"
#include "trinet/tensor.hpp"

namespace trinet::backbone {

/// Geometry shared by every branch. Branch outputs are (B, channels, frames,
/// height / 8, width / 8).
struct PipelineShape {
  std::size_t in_channels = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 8;
  std::size_t channels = 16;  // C_f
  std::size_t groups = 4;     // temporal conv groups

  static constexpr std::size_t kReduction = 8;  // three stride-2 stages

  std::size_t out_height() const { return height / kReduction; }
  std::size_t out_width() const { return width / kReduction; }
  Dims input_dims(std::size_t batch) const { return {batch, in_channels, frames, height, width}; }
  Dims branch_dims(std::size_t batch) const { return {batch, channels, frames, out_height(), out_width()}; }

  void validate() const;
  /// Throws unless `clip` is (B, in_channels, frames, height, width) with B >= 1.
  void check_input(const Tensor& clip, const std::string& where) const;
  void check_branch(const Tensor& features, const std::string& where) const;
};

struct ResBlockParams {
  nn::ConvParams conv;      // 3x3, stride 2
  nn::ConvParams shortcut;  // 1x1, stride 2 projection
};

struct Res2dParams {
  nn::ConvParams stem;  // 3x3 stride 2, C_in -> 8
  ResBlockParams block_a;  // 8 -> 16
  ResBlockParams block_b;  // 16 -> C_f
};

/// 2-D residual stages per frame followed by the grouped temporal stage.
/// Used for the backbone branch and, with its own weights, as the wavelet
/// branch's RSTN.
struct SpatioTemporalParams {
  Res2dParams spatial;
  nn::ConvParams temporal;  // (C_f, C_f / groups, 3)

  static SpatioTemporalParams init(Rng& rng, const PipelineShape& shape, float bias_range);
};

ResBlockParams init_res_block(Rng& rng, std::size_t c_in, std::size_t c_out, float bias_range);

/// ReLU(conv(x) + shortcut(x))
Tensor res_block_forward(const Tensor& x, const ResBlockParams& p);
/// (N, C_in, H, W) -> (N, C_f, H/8, W/8)
Tensor res2d_forward(const Tensor& frames, const Res2dParams& p);
/// Grouped 3x1x1 conv, ReLU, then 1x3x3 max pool. Shape preserving.
Tensor temporal_forward(const Tensor& x, const nn::ConvParams& temporal);
/// (B, C_in, T, H, W) -> spatiotemporal features of shape (B, C_f, T, H/8, W/8)
Tensor backbone_forward(const Tensor& clip, const SpatioTemporalParams& p);

/// Seeded per-frame conv encoder standing in for a frozen image encoder.
struct StubEncoderParams {
  nn::ConvParams stem;       // 3x3 stride 2, C_in -> 8
  ResBlockParams block;      // 8 -> 16, stride 2
  nn::ConvParams projection; // 1x1 stride 2, 16 -> C_f

  static StubEncoderParams init(Rng& rng, const PipelineShape& shape, float bias_range);
};

Tensor stub_encode(const Tensor& clip, const StubEncoderParams& p);

/// Identifies one clip of one video for stored embeddings.
struct ClipKey {
  std::string video_id;
  std::size_t clip_index = 0;
};

/// File name for a stored embedding: "<video_id>_<clip_index>.tnsr".
std::string embedding_file_name(const ClipKey& key);

/// Produces frame-encoder features in the common branch shape.
class FrameFeatureProvider {
 public:
  enum class Kind { stub_encoder, file_embeddings };

  static FrameFeatureProvider stub(StubEncoderParams params);
  static FrameFeatureProvider from_directory(std::filesystem::path dir);

  Kind kind() const { return kind_; }
  const StubEncoderParams& stub_params() const { return stub_; }

  /// `keys` is required for the file variant (one per batch entry) and
  /// ignored by the stub.
  Tensor encode(const Tensor& clip, const PipelineShape& shape, std::span<const ClipKey> keys = {}) const;

 private:
  Kind kind_ = Kind::stub_encoder;
  StubEncoderParams stub_;
  std::filesystem::path dir_;
};

}  // namespace trinet::backbone
