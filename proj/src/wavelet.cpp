#include "trinet/wavelet.hpp"

#include <stdexcept>

namespace trinet::wavelet {

namespace {

Dims halved(const Dims& d) {
  Dims out = d;
  out[out.size() - 2] /= 2;
  out[out.size() - 1] /= 2;
  return out;
}

Dims doubled(const Dims& d) {
  Dims out = d;
  out[out.size() - 2] *= 2;
  out[out.size() - 1] *= 2;
  return out;
}

// Rank-3 (C, h, w) bands are promoted to (1, C, h, w) for the conv kernel.
Tensor as_batch(const Tensor& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) {
    Dims d{1};
    d.insert(d.end(), t.dims().begin(), t.dims().end());
    return t.reshaped(std::move(d), layout::nchw);
  }
  throw std::invalid_argument("hf_conv: bands must be (C,h,w) or (N,C,h,w), got " + dims_to_string(t.dims()));
}

}  // namespace

HaarBands haar_decompose(const Tensor& x) {
  if (x.rank() < 2) throw std::invalid_argument("haar_decompose: need at least (H, W)");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("haar_decompose: H and W must be even, got " + dims_to_string(x.dims()));
  const std::size_t planes = x.size() / (h * w);
  const std::size_t ho = h / 2, wo = w / 2;
  const Dims out_dims = halved(x.dims());

  std::array<Tensor, 4> bands;
  for (auto& b : bands) b = Tensor::zeros(out_dims, x.roles());
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data() + p * h * w;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        const std::array<double, 4> block{src[(2 * i) * w + 2 * j], src[(2 * i) * w + 2 * j + 1],
                                          src[(2 * i + 1) * w + 2 * j], src[(2 * i + 1) * w + 2 * j + 1]};
        for (std::size_t k = 0; k < 4; ++k) {
          const auto& f = haar::filters[k];
          const double v = f[0] * block[0] + f[1] * block[1] + f[2] * block[2] + f[3] * block[3];
          bands[k][(p * ho + i) * wo + j] = static_cast<float>(v);
        }
      }
    }
  }
  return {std::move(bands[0]), std::move(bands[1]), std::move(bands[2]), std::move(bands[3])};
}

Tensor haar_reconstruct(const Tensor& ll, const Tensor& lh, const Tensor& hl, const Tensor& hh) {
  if (ll.dims() != lh.dims() || ll.dims() != hl.dims() || ll.dims() != hh.dims())
    throw std::invalid_argument("haar_reconstruct: band shapes differ: " + dims_to_string(ll.dims()) + " " +
                                dims_to_string(lh.dims()) + " " + dims_to_string(hl.dims()) + " " +
                                dims_to_string(hh.dims()));
  if (ll.rank() < 2) throw std::invalid_argument("haar_reconstruct: need at least (h, w)");
  const std::size_t h = ll.dim(ll.rank() - 2), w = ll.dim(ll.rank() - 1);
  const std::size_t planes = ll.size() / (h * w);
  const std::size_t wo = 2 * w;
  Tensor out = Tensor::zeros(doubled(ll.dims()), ll.roles());
  const std::array<const Tensor*, 4> bands{&ll, &lh, &hl, &hh};
  for (std::size_t p = 0; p < planes; ++p) {
    float* dst = out.data() + p * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t at = (p * h + i) * w + j;
        for (std::size_t tap = 0; tap < 4; ++tap) {
          double v = 0.0;
          for (std::size_t k = 0; k < 4; ++k) v += static_cast<double>(haar::filters[k][tap]) * (*bands[k])[at];
          dst[(2 * i + tap / 2) * wo + 2 * j + tap % 2] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

WaveletPyramid multilevel_decompose(const Tensor& x, std::size_t levels) {
  if (x.rank() < 2) throw std::invalid_argument("multilevel_decompose: need at least (H, W)");
  const std::size_t factor = std::size_t{1} << levels;
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("multilevel_decompose: " + dims_to_string(x.dims()) + " not divisible by 2^" +
                                std::to_string(levels));
  WaveletPyramid pyr;
  pyr.top_ll = x;
  for (std::size_t level = 0; level < levels; ++level) {
    HaarBands b = haar_decompose(pyr.top_ll);
    pyr.levels.push_back({std::move(b.lh), std::move(b.hl), std::move(b.hh)});
    pyr.top_ll = std::move(b.ll);
  }
  return pyr;
}

WtcrParams WtcrParams::init(Rng& rng, const backbone::PipelineShape& shape, std::size_t levels, HfInit hf_init,
                            float bias_range) {
  shape.validate();
  const std::size_t factor = std::size_t{1} << levels;
  if (shape.height % factor != 0 || shape.width % factor != 0)
    throw std::invalid_argument("WtcrParams: input size not divisible by 2^M");
  WtcrParams p;
  p.levels = levels;
  const std::size_t c3 = 3 * shape.in_channels;
  for (std::size_t i = 0; i < levels; ++i) {
    switch (hf_init) {
      case HfInit::seeded: p.hf.push_back(nn::init_conv2d(rng, c3, c3, 3, 1, 1, 1, bias_range)); break;
      case HfInit::identity: p.hf.push_back(nn::identity_conv2d(c3, 3)); break;
      case HfInit::zero: {
        auto conv = nn::identity_conv2d(c3, 3);
        for (auto& v : conv.weight.values()) v = 0.0f;
        p.hf.push_back(std::move(conv));
        break;
      }
    }
  }
  p.rstn = backbone::SpatioTemporalParams::init(rng, shape, bias_range);
  return p;
}

DetailBands hf_conv(const DetailBands& bands, const nn::ConvParams& weights) {
  if (bands.lh.dims() != bands.hl.dims() || bands.lh.dims() != bands.hh.dims())
    throw std::invalid_argument("hf_conv: detail band shapes differ");
  const bool unbatched = bands.lh.rank() == 3;
  const std::array<Tensor, 3> stacked_parts{as_batch(bands.lh), as_batch(bands.hl), as_batch(bands.hh)};
  const std::size_t c = stacked_parts[0].dim(1);
  if (weights.weight.rank() != 4 || weights.out_channels() != 3 * c || weights.in_channels() != 3 * c ||
      weights.weight.dim(2) != 3 || weights.weight.dim(3) != 3 || weights.stride != 1 || weights.pad != 1)
    throw std::invalid_argument("hf_conv: weights must be a same-padded 3x3 conv over " + std::to_string(3 * c) +
                                " channels");
  const Tensor out = nn::conv2d(concat(stacked_parts, 1), weights);
  auto part = [&](std::size_t g) {
    Tensor s = slice(out, 1, g * c, c);
    return unbatched ? s.reshaped(bands.lh.dims(), bands.lh.roles()) : s;
  };
  return {part(0), part(1), part(2)};
}

Tensor wtcr_reconstruct(const WaveletPyramid& pyramid, const WtcrParams& params) {
  if (pyramid.depth() != params.levels || params.hf.size() != params.levels)
    throw std::invalid_argument("wtcr_reconstruct: pyramid depth " + std::to_string(pyramid.depth()) +
                                " does not match M=" + std::to_string(params.levels));
  Tensor ll = pyramid.top_ll;
  for (std::size_t level = pyramid.depth(); level-- > 0;) {
    const DetailBands processed = hf_conv(pyramid.levels[level], params.hf[level]);
    ll = haar_reconstruct(ll, processed.lh, processed.hl, processed.hh);
  }
  return ll;
}

Tensor wtcr_forward(const Tensor& clip, const WtcrParams& params) {
  nn::require_rank(clip, 5, "wtcr_forward");
  const std::size_t factor = std::size_t{1} << params.levels;
  if (clip.dim(3) % factor != 0 || clip.dim(4) % factor != 0)
    throw std::invalid_argument("wtcr_forward: " + dims_to_string(clip.dims()) + " not divisible by 2^" +
                                std::to_string(params.levels));
  const std::size_t batch = clip.dim(0);
  const Tensor frames = nn::clip_to_frames(clip);
  const Tensor restored = wtcr_reconstruct(multilevel_decompose(frames, params.levels), params);
  return backbone::backbone_forward(nn::frames_to_clip(restored, batch), params.rstn);
}

double detail_energy(const Tensor& x) {
  const HaarBands b = haar_decompose(x);
  return (sum_of_squares(b.lh) + sum_of_squares(b.hl) + sum_of_squares(b.hh)) / static_cast<double>(x.size());
}

}  // namespace trinet::wavelet
