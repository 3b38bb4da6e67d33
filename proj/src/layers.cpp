#include "trinet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace trinet::nn {

namespace {

Tensor bias_tensor(Rng& rng, std::size_t n, float range) {
  if (range <= 0.0f) return Tensor::zeros({n}, layout::generic(1));
  return seeded_uniform({n}, layout::generic(1), -range, range, rng);
}

Tensor fan_in_weights(Rng& rng, Dims dims, std::size_t fan_in) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  const auto rank = dims.size();
  return seeded_uniform(std::move(dims), layout::generic(rank), -bound, bound, rng);
}

void check_bias(const ConvParams& p, const char* where) {
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.out_channels())
    throw std::invalid_argument(std::string(where) + ": bias extent does not match output channels");
  if (p.groups == 0 || p.out_channels() % p.groups != 0)
    throw std::invalid_argument(std::string(where) + ": output channels not divisible by groups");
}

}  // namespace

void require_rank(const Tensor& t, std::size_t rank, const std::string& where) {
  if (t.rank() != rank)
    throw std::invalid_argument(where + ": expected rank " + std::to_string(rank) + ", got " +
                                dims_to_string(t.dims()));
}

ConvParams init_conv2d(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t groups, float bias_range) {
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0)
    throw std::invalid_argument("init_conv2d: channels not divisible by groups");
  const std::size_t cig = c_in / groups;
  ConvParams p;
  p.weight = fan_in_weights(rng, {c_out, cig, k, k}, cig * k * k);
  p.bias = bias_tensor(rng, c_out, bias_range);
  p.stride = stride;
  p.pad = pad;
  p.groups = groups;
  return p;
}

ConvParams init_temporal(Rng& rng, std::size_t channels, std::size_t k_t, std::size_t groups,
                         float bias_range) {
  if (groups == 0 || channels % groups != 0)
    throw std::invalid_argument("init_temporal: channels not divisible by groups");
  const std::size_t cig = channels / groups;
  ConvParams p;
  p.weight = fan_in_weights(rng, {channels, cig, k_t}, cig * k_t);
  p.bias = bias_tensor(rng, channels, bias_range);
  p.pad = k_t / 2;
  p.groups = groups;
  return p;
}

ConvParams init_pointwise(Rng& rng, std::size_t c_in, std::size_t c_out, float bias_range) {
  ConvParams p;
  p.weight = fan_in_weights(rng, {c_out, c_in}, c_in);
  p.bias = bias_tensor(rng, c_out, bias_range);
  return p;
}

LinearParams init_linear(Rng& rng, std::size_t in, std::size_t out, float bias_range) {
  LinearParams p;
  p.weight = fan_in_weights(rng, {out, in}, in);
  p.bias = bias_tensor(rng, out, bias_range);
  return p;
}

ConvParams identity_conv2d(std::size_t channels, std::size_t k) {
  ConvParams p;
  p.weight = Tensor::zeros({channels, channels, k, k}, layout::generic(4));
  for (std::size_t c = 0; c < channels; ++c) p.weight.at({c, c, k / 2, k / 2}) = 1.0f;
  p.bias = Tensor::zeros({channels}, layout::generic(1));
  p.pad = k / 2;
  return p;
}

ConvParams identity_pointwise(std::size_t channels) {
  ConvParams p;
  p.weight = Tensor::zeros({channels, channels}, layout::generic(2));
  for (std::size_t c = 0; c < channels; ++c) p.weight.at({c, c}) = 1.0f;
  p.bias = Tensor::zeros({channels}, layout::generic(1));
  return p;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  require_rank(x, 4, "conv2d input");
  require_rank(p.weight, 4, "conv2d weight");
  check_bias(p, "conv2d");
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = p.weight.dim(0), cig = p.weight.dim(1), kh = p.weight.dim(2),
                    kw = p.weight.dim(3);
  if (c_in != cig * p.groups)
    throw std::invalid_argument("conv2d: input has " + std::to_string(c_in) +
                                " channels, weights expect " + std::to_string(cig * p.groups));
  if (p.stride == 0) throw std::invalid_argument("conv2d: zero stride");
  if (h + 2 * p.pad < kh || w + 2 * p.pad < kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t ho = (h + 2 * p.pad - kh) / p.stride + 1;
  const std::size_t wo = (w + 2 * p.pad - kw) / p.stride + 1;
  const std::size_t cog = c_out / p.groups;

  std::vector<float> out(n * c_out * ho * wo);
  const float* xd = x.data();
  const float* wd = p.weight.data();
  const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      const std::size_t g = oc / cog;
      float* od = out.data() + ((b * c_out + oc) * ho) * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = p.bias[oc];
          for (std::size_t ic = 0; ic < cig; ++ic) {
            const float* xc = xd + (b * c_in + g * cig + ic) * h * w;
            const float* wk = wd + ((oc * cig + ic) * kh) * kw;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) -
                              static_cast<std::ptrdiff_t>(p.pad);
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) -
                                static_cast<std::ptrdiff_t>(p.pad);
                if (ix < 0 || ix >= iw) continue;
                acc += static_cast<double>(wk[ky * kw + kx]) * xc[iy * iw + ix];
              }
            }
          }
          od[oy * wo + ox] = static_cast<float>(acc);
        }
      }
    }
  }
  return Tensor({n, c_out, ho, wo}, layout::nchw, std::move(out));
}

Tensor conv_temporal(const Tensor& x, const ConvParams& p) {
  require_rank(x, 5, "conv_temporal input");
  require_rank(p.weight, 3, "conv_temporal weight");
  check_bias(p, "conv_temporal");
  const std::size_t b_n = x.dim(0), c_in = x.dim(1), t_n = x.dim(2), hw = x.dim(3) * x.dim(4);
  const std::size_t c_out = p.weight.dim(0), cig = p.weight.dim(1), kt = p.weight.dim(2);
  if (c_in != cig * p.groups)
    throw std::invalid_argument("conv_temporal: input has " + std::to_string(c_in) +
                                " channels, weights expect " + std::to_string(cig * p.groups));
  if (kt != 2 * p.pad + 1) throw std::invalid_argument("conv_temporal: only same padding supported");
  const std::size_t cog = c_out / p.groups;

  std::vector<float> out(b_n * c_out * t_n * hw);
  std::vector<double> acc(hw);
  const auto tn = static_cast<std::ptrdiff_t>(t_n);
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      const std::size_t g = oc / cog;
      for (std::size_t t = 0; t < t_n; ++t) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[oc]));
        for (std::size_t ic = 0; ic < cig; ++ic) {
          for (std::size_t k = 0; k < kt; ++k) {
            const auto ti = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(p.pad);
            if (ti < 0 || ti >= tn) continue;
            const double wv = p.weight[(oc * cig + ic) * kt + k];
            const float* src = x.data() + ((b * c_in + g * cig + ic) * t_n + ti) * hw;
            for (std::size_t s = 0; s < hw; ++s) acc[s] += wv * src[s];
          }
        }
        float* dst = out.data() + ((b * c_out + oc) * t_n + t) * hw;
        for (std::size_t s = 0; s < hw; ++s) dst[s] = static_cast<float>(acc[s]);
      }
    }
  }
  return Tensor({b_n, c_out, t_n, x.dim(3), x.dim(4)}, layout::bcthw, std::move(out));
}

Tensor conv_pointwise(const Tensor& x, const ConvParams& p) {
  require_rank(x, 5, "conv_pointwise input");
  require_rank(p.weight, 2, "conv_pointwise weight");
  check_bias(p, "conv_pointwise");
  const std::size_t b_n = x.dim(0), c_in = x.dim(1);
  const std::size_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
  const std::size_t c_out = p.weight.dim(0);
  if (p.weight.dim(1) != c_in)
    throw std::invalid_argument("conv_pointwise: input has " + std::to_string(c_in) +
                                " channels, projection expects " + std::to_string(p.weight.dim(1)));
  std::vector<float> out(b_n * c_out * spatial);
  std::vector<double> acc(spatial);
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(p.bias[oc]));
      for (std::size_t ic = 0; ic < c_in; ++ic) {
        const double wv = p.weight[oc * c_in + ic];
        if (wv == 0.0) continue;
        const float* src = x.data() + (b * c_in + ic) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) acc[s] += wv * src[s];
      }
      float* dst = out.data() + (b * c_out + oc) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) dst[s] = static_cast<float>(acc[s]);
    }
  }
  return Tensor({b_n, c_out, x.dim(2), x.dim(3), x.dim(4)}, layout::bcthw, std::move(out));
}

Tensor max_pool_1x3x3(const Tensor& x) {
  require_rank(x, 5, "max_pool_1x3x3");
  const std::size_t planes = x.dim(0) * x.dim(1) * x.dim(2);
  const std::size_t h = x.dim(3), w = x.dim(4);
  Tensor out = Tensor::zeros(x.dims(), x.roles());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const float* src = x.data() + pl * h * w;
    float* dst = out.data() + pl * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t y0 = y == 0 ? 0 : y - 1, y1 = std::min(h - 1, y + 1);
      for (std::size_t xx = 0; xx < w; ++xx) {
        const std::size_t x0 = xx == 0 ? 0 : xx - 1, x1 = std::min(w - 1, xx + 1);
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t yy = y0; yy <= y1; ++yy)
          for (std::size_t xi = x0; xi <= x1; ++xi) m = std::max(m, src[yy * w + xi]);
        dst[y * w + xx] = m;
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  require_rank(x, 2, "linear input");
  const std::size_t b_n = x.dim(0), in = x.dim(1), out_n = p.weight.dim(0);
  if (p.weight.dim(1) != in) throw std::invalid_argument("linear: feature width mismatch");
  std::vector<float> out(b_n * out_n);
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t o = 0; o < out_n; ++o) {
      double acc = p.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(p.weight[o * in + i]) * x[b * in + i];
      out[b * out_n + o] = static_cast<float>(acc);
    }
  }
  return Tensor({b_n, out_n}, layout::bc, std::move(out));
}

Tensor clip_to_frames(const Tensor& clip) {
  require_rank(clip, 5, "clip_to_frames");
  const std::size_t b_n = clip.dim(0), c = clip.dim(1), t_n = clip.dim(2), hw = clip.dim(3) * clip.dim(4);
  std::vector<float> out(clip.size());
  for (std::size_t b = 0; b < b_n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < t_n; ++t) {
        const float* src = clip.data() + ((b * c + ch) * t_n + t) * hw;
        std::copy(src, src + hw, out.data() + ((b * t_n + t) * c + ch) * hw);
      }
  return Tensor({b_n * t_n, c, clip.dim(3), clip.dim(4)}, layout::nchw, std::move(out));
}

Tensor frames_to_clip(const Tensor& frames, std::size_t batch) {
  require_rank(frames, 4, "frames_to_clip");
  if (batch == 0 || frames.dim(0) % batch != 0)
    throw std::invalid_argument("frames_to_clip: frame count not divisible by batch");
  const std::size_t t_n = frames.dim(0) / batch, c = frames.dim(1), hw = frames.dim(2) * frames.dim(3);
  std::vector<float> out(frames.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < t_n; ++t)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* src = frames.data() + ((b * t_n + t) * c + ch) * hw;
        std::copy(src, src + hw, out.data() + ((b * c + ch) * t_n + t) * hw);
      }
  return Tensor({batch, c, t_n, frames.dim(2), frames.dim(3)}, layout::bcthw, std::move(out));
}

Tensor global_average(const Tensor& x) {
  if (x.rank() < 3) throw std::invalid_argument("global_average: need (B, C, ...)");
  const std::size_t b_n = x.dim(0), c = x.dim(1), inner = x.size() / (b_n * c);
  std::vector<float> out(b_n * c);
  for (std::size_t i = 0; i < b_n * c; ++i) {
    double acc = 0.0;
    const float* src = x.data() + i * inner;
    for (std::size_t s = 0; s < inner; ++s) acc += src[s];
    out[i] = static_cast<float>(acc / static_cast<double>(inner));
  }
  return Tensor({b_n, c}, layout::bc, std::move(out));
}

}  // namespace trinet::nn
