#include "trinet/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "trinet/rng.hpp"

namespace trinet::synth {

using nlohmann::json;

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Population variance across repetitions.
double variance_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

}  // namespace

void CoverageSpec::validate() const {
  sampler.validate();
  if (videos == 0) throw std::invalid_argument("CoverageSpec: need at least one video");
  if (min_frames == 0 || min_frames > max_frames) throw std::invalid_argument("CoverageSpec: bad frame-count range");
  if (min_width > max_width) throw std::invalid_argument("CoverageSpec: bad lesion-width range");
  if (repetitions == 0) throw std::invalid_argument("CoverageSpec: need at least one repetition");
}

std::vector<hfs::VideoMeta> gen_coverage_dataset(const CoverageSpec& spec) {
  spec.validate();
  const Rng root(derive_seed(spec.seed, seed_domain::synth));
  std::vector<hfs::VideoMeta> metas;
  metas.reserve(spec.videos);
  for (std::size_t v = 0; v < spec.videos; ++v) {
    Rng rng = root.fork(v);
    hfs::VideoMeta m;
    m.video_id = numbered("vid", v);
    m.patient_id = numbered("pat", v);
    m.label = hfs::Label::malignant;
    m.num_frames = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_frames), static_cast<std::int64_t>(spec.max_frames)));
    const auto width = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_width), static_cast<std::int64_t>(spec.max_width)));
    if (width > m.num_frames)
      throw std::invalid_argument("gen_coverage_dataset: lesion width " + std::to_string(width) +
                                  " exceeds video length " + std::to_string(m.num_frames));
    const auto offset =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m.num_frames - width)));
    m.lesion_frames.resize(width);
    std::iota(m.lesion_frames.begin(), m.lesion_frames.end(), offset);
    metas.push_back(std::move(m));
  }
  return metas;
}

double StrategyTrials::background_mean() const { return mean_of(background); }
double StrategyTrials::background_variance() const { return variance_of(background); }
double StrategyTrials::rich_mean() const { return mean_of(rich); }
double StrategyTrials::rich_variance() const { return variance_of(rich); }

ComparisonReport run_coverage_experiment(const CoverageSpec& spec) {
  return run_coverage_experiment(spec, gen_coverage_dataset(spec));
}

ComparisonReport run_coverage_experiment(const CoverageSpec& spec, const std::vector<hfs::VideoMeta>& metas) {
  spec.validate();
  const Rng root(derive_seed(spec.seed, seed_domain::sampler));
  ComparisonReport report;
  report.repetitions = spec.repetitions;
  for (std::size_t r = 0; r < spec.repetitions; ++r) {
    const Rng rep = root.fork(r);
    for (auto strategy : {hfs::Strategy::heuristic, hfs::Strategy::random}) {
      const Rng stream = rep.fork(static_cast<std::uint64_t>(strategy));
      std::vector<hfs::ClipPlan> plans;
      plans.reserve(metas.size());
      for (std::size_t v = 0; v < metas.size(); ++v) {
        Rng rng = stream.fork(v);
        plans.push_back(hfs::sample_clips(metas[v], spec.sampler, strategy, rng));
      }
      const hfs::CoverageStats stats = hfs::coverage_report(plans, metas);
      StrategyTrials& trials = strategy == hfs::Strategy::heuristic ? report.heuristic : report.random;
      trials.background.push_back(stats.background_fraction);
      trials.rich.push_back(stats.rich_fraction);
      trials.pooled.merge(stats);
    }
    if (report.heuristic.background.back() < report.random.background.back()) ++report.heuristic_wins;
  }
  return report;
}

void TextureSpec::validate() const {
  if (videos_per_class == 0 || in_channels == 0 || frames == 0 || blobs == 0)
    throw std::invalid_argument("TextureSpec: counts must be >= 1");
  const std::size_t factor = std::max<std::size_t>(8, std::size_t{1} << levels);
  if (height == 0 || width == 0 || height % factor != 0 || width % factor != 0)
    throw std::invalid_argument("TextureSpec: " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible by " + std::to_string(factor));
  if (speckle_amplitude < 0.0f || noise_amplitude < 0.0f || blob_amplitude < 0.0f)
    throw std::invalid_argument("TextureSpec: amplitudes must be non-negative");
}

std::vector<TextureVideo> gen_texture_dataset(const TextureSpec& spec) {
  spec.validate();
  const Rng root(derive_seed(spec.seed, seed_domain::synth));
  const std::size_t total = 2 * spec.videos_per_class;
  const std::size_t h = spec.height, w = spec.width, plane = h * w;
  std::vector<TextureVideo> out;
  out.reserve(total);

  struct Blob {
    double cy, cx, vy, vx, sigma, amp;
  };

  for (std::size_t v = 0; v < total; ++v) {
    Rng rng = root.fork(v);
    TextureVideo video;
    video.label = static_cast<int>(v % 2);
    video.video_id = numbered("tex", v);
    video.patient_id = numbered("tpat", v);
    Tensor clip = Tensor::zeros({1, spec.in_channels, spec.frames, h, w}, layout::bcthw);

    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      std::vector<Blob> blobs(spec.blobs);
      for (auto& b : blobs) {
        b.cy = rng.uniform(0.0, static_cast<double>(h));
        b.cx = rng.uniform(0.0, static_cast<double>(w));
        b.vy = rng.uniform(-1.0, 1.0);
        b.vx = rng.uniform(-1.0, 1.0);
        b.sigma = rng.uniform(0.125, 0.25) * static_cast<double>(std::min(h, w));
        b.amp = rng.uniform(0.5, 1.0) * spec.blob_amplitude;
      }
      for (std::size_t t = 0; t < spec.frames; ++t) {
        float* frame = clip.data() + (c * spec.frames + t) * plane;
        for (const auto& b : blobs) {
          const double cy = b.cy + b.vy * static_cast<double>(t);
          const double cx = b.cx + b.vx * static_cast<double>(t);
          const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
              frame[y * w + x] += static_cast<float>(b.amp * std::exp(-(dy * dy + dx * dx) * inv));
            }
        }
        for (std::size_t i = 0; i < plane; ++i)
          frame[i] += static_cast<float>(spec.noise_amplitude * rng.normal());
        if (video.label == 1 && spec.speckle_amplitude > 0.0f) {
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double sign = (x + y) % 2 == 0 ? 1.0 : -1.0;
              frame[y * w + x] += static_cast<float>(spec.speckle_amplitude * sign * rng.uniform(0.5, 1.5));
            }
        }
      }
    }
    video.clip = std::move(clip);
    out.push_back(std::move(video));
  }
  return out;
}

Tensor stack_clips(const std::vector<TextureVideo>& videos, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > videos.size()) throw std::invalid_argument("stack_clips: range out of bounds");
  std::vector<Tensor> parts;
  parts.reserve(count);
  for (std::size_t i = begin; i < begin + count; ++i) parts.push_back(videos[i].clip);
  return concat(parts, 0);
}

void write_texture_dataset(const std::vector<TextureVideo>& videos, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "clips");
  json list = json::array();
  for (const auto& v : videos) {
    const std::string file = "clips/" + v.video_id + ".tnsr";
    save(v.clip, dir / file);
    list.push_back({{"video_id", v.video_id}, {"file", file}, {"label", v.label}, {"patient_id", v.patient_id}});
  }
  std::ofstream os(dir / "dataset.json");
  if (!os) throw std::runtime_error("write_texture_dataset: cannot write manifest in " + dir.string());
  os << json{{"format", "trinet-dataset"}, {"videos", list}}.dump(2) << '\n';
}

std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw std::runtime_error("cannot open dataset manifest " + manifest.string());
  const json j = json::parse(is);
  std::vector<DatasetEntry> out;
  for (const auto& e : j.at("videos")) {
    DatasetEntry d;
    d.video_id = e.at("video_id").get<std::string>();
    d.file = e.at("file").get<std::string>();
    d.label = e.at("label").get<int>();
    d.patient_id = e.at("patient_id").get<std::string>();
    if (d.label != 0 && d.label != 1) throw std::invalid_argument("dataset manifest: label must be 0 or 1");
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace trinet::synth
