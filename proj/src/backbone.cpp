#include "trinet/backbone.hpp"

#include <stdexcept>

namespace trinet::backbone {

namespace {

constexpr std::size_t kStemChannels = 8;
constexpr std::size_t kMidChannels = 16;

}  // namespace

void PipelineShape::validate() const {
  if (in_channels == 0 || frames == 0 || channels == 0 || groups == 0)
    throw std::invalid_argument("PipelineShape: extents must be >= 1");
  if (height == 0 || width == 0 || height % kReduction != 0 || width % kReduction != 0)
    throw std::invalid_argument("PipelineShape: H and W must be positive multiples of 8, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  if (channels % groups != 0) throw std::invalid_argument("PipelineShape: C_f not divisible by groups");
}

void PipelineShape::check_input(const Tensor& clip, const std::string& where) const {
  nn::require_rank(clip, 5, where);
  if (clip.dim(3) % kReduction != 0 || clip.dim(4) % kReduction != 0)
    throw std::invalid_argument(where + ": H and W must be divisible by 8, got " + dims_to_string(clip.dims()));
  const Dims expected = input_dims(clip.dim(0));
  if (clip.dims() != expected)
    throw std::invalid_argument(where + ": clip " + dims_to_string(clip.dims()) + " does not match pipeline " +
                                dims_to_string(expected));
}

void PipelineShape::check_branch(const Tensor& features, const std::string& where) const {
  nn::require_rank(features, 5, where);
  const Dims expected = branch_dims(features.dim(0));
  if (features.dims() != expected)
    throw std::invalid_argument(where + ": features " + dims_to_string(features.dims()) + " expected " +
                                dims_to_string(expected));
}

ResBlockParams init_res_block(Rng& rng, std::size_t c_in, std::size_t c_out, float bias_range) {
  ResBlockParams p;
  p.conv = nn::init_conv2d(rng, c_in, c_out, 3, 2, 1, 1, bias_range);
  p.shortcut = nn::init_conv2d(rng, c_in, c_out, 1, 2, 0, 1, bias_range);
  return p;
}

SpatioTemporalParams SpatioTemporalParams::init(Rng& rng, const PipelineShape& shape, float bias_range) {
  shape.validate();
  SpatioTemporalParams p;
  p.spatial.stem = nn::init_conv2d(rng, shape.in_channels, kStemChannels, 3, 2, 1, 1, bias_range);
  p.spatial.block_a = init_res_block(rng, kStemChannels, kMidChannels, bias_range);
  p.spatial.block_b = init_res_block(rng, kMidChannels, shape.channels, bias_range);
  p.temporal = nn::init_temporal(rng, shape.channels, 3, shape.groups, bias_range);
  return p;
}

Tensor res_block_forward(const Tensor& x, const ResBlockParams& p) {
  return relu(add(nn::conv2d(x, p.conv), nn::conv2d(x, p.shortcut)));
}

Tensor res2d_forward(const Tensor& frames, const Res2dParams& p) {
  nn::require_rank(frames, 4, "res2d_forward");
  if (frames.dim(2) % PipelineShape::kReduction != 0 || frames.dim(3) % PipelineShape::kReduction != 0)
    throw std::invalid_argument("res2d_forward: H and W must be divisible by 8, got " +
                                dims_to_string(frames.dims()));
  Tensor x = relu(nn::conv2d(frames, p.stem));
  x = res_block_forward(x, p.block_a);
  return res_block_forward(x, p.block_b);
}

Tensor temporal_forward(const Tensor& x, const nn::ConvParams& temporal) {
  nn::require_rank(x, 5, "temporal_forward");
  if (temporal.groups == 0 || x.dim(1) % temporal.groups != 0)
    throw std::invalid_argument("temporal_forward: channels not divisible by groups");
  return nn::max_pool_1x3x3(relu(nn::conv_temporal(x, temporal)));
}

Tensor backbone_forward(const Tensor& clip, const SpatioTemporalParams& p) {
  nn::require_rank(clip, 5, "backbone_forward");
  const std::size_t batch = clip.dim(0);
  const Tensor spatial = res2d_forward(nn::clip_to_frames(clip), p.spatial);
  return temporal_forward(nn::frames_to_clip(spatial, batch), p.temporal);
}

StubEncoderParams StubEncoderParams::init(Rng& rng, const PipelineShape& shape, float bias_range) {
  shape.validate();
  StubEncoderParams p;
  p.stem = nn::init_conv2d(rng, shape.in_channels, kStemChannels, 3, 2, 1, 1, bias_range);
  p.block = init_res_block(rng, kStemChannels, kMidChannels, bias_range);
  p.projection = nn::init_conv2d(rng, kMidChannels, shape.channels, 1, 2, 0, 1, bias_range);
  return p;
}

Tensor stub_encode(const Tensor& clip, const StubEncoderParams& p) {
  nn::require_rank(clip, 5, "stub_encode");
  const std::size_t batch = clip.dim(0);
  Tensor x = relu(nn::conv2d(nn::clip_to_frames(clip), p.stem));
  x = res_block_forward(x, p.block);
  // Linear projection: encoder features keep their sign so the attention gates see both.
  return nn::frames_to_clip(nn::conv2d(x, p.projection), batch);
}

std::string embedding_file_name(const ClipKey& key) {
  return key.video_id + "_" + std::to_string(key.clip_index) + ".tnsr";
}

FrameFeatureProvider FrameFeatureProvider::stub(StubEncoderParams params) {
  FrameFeatureProvider p;
  p.kind_ = Kind::stub_encoder;
  p.stub_ = std::move(params);
  return p;
}

FrameFeatureProvider FrameFeatureProvider::from_directory(std::filesystem::path dir) {
  FrameFeatureProvider p;
  p.kind_ = Kind::file_embeddings;
  p.dir_ = std::move(dir);
  return p;
}

Tensor FrameFeatureProvider::encode(const Tensor& clip, const PipelineShape& shape,
                                    std::span<const ClipKey> keys) const {
  shape.check_input(clip, "provider_encode");
  const std::size_t batch = clip.dim(0);
  if (kind_ == Kind::stub_encoder) {
    Tensor out = stub_encode(clip, stub_);
    shape.check_branch(out, "provider_encode (stub)");
    return out;
  }

  if (keys.size() != batch)
    throw std::invalid_argument("provider_encode: file provider needs one key per batch entry");
  const Dims per_clip = shape.branch_dims(1);
  std::vector<Tensor> parts;
  parts.reserve(batch);
  for (const auto& key : keys) {
    const auto path = dir_ / embedding_file_name(key);
    if (!std::filesystem::exists(path)) throw std::runtime_error("provider_encode: missing embedding " + path.string());
    Tensor t = load(path);
    if (t.rank() == 4 && t.dims() == Dims(per_clip.begin() + 1, per_clip.end()))
      t = t.reshaped(per_clip, layout::bcthw);
    if (t.dims() != per_clip)
      throw std::invalid_argument("provider_encode: " + path.string() + " has dims " + dims_to_string(t.dims()) +
                                  ", expected " + dims_to_string(per_clip));
    parts.push_back(t.with_roles(layout::bcthw));
  }
  return concat(parts, 0);
}

}  // namespace trinet::backbone
