#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trinet/hfs_sampler.hpp"
#include "trinet/tensor.hpp"

namespace trinet::synth {

/// Annotated videos with one contiguous lesion window each.
struct CoverageSpec {
  std::size_t videos = 2000;
  std::size_t min_frames = 150, max_frames = 250;  // L ~ U{min..max}
  std::size_t min_width = 60, max_width = 120;     // window width ~ U{min..max}
  hfs::SamplerConfig sampler{4, 8, 8};
  std::size_t repetitions = 20;
  std::uint64_t seed = 42;

  void validate() const;
};

std::vector<hfs::VideoMeta> gen_coverage_dataset(const CoverageSpec& spec);

struct StrategyTrials {
  std::vector<double> background;  // background-only fraction per repetition
  std::vector<double> rich;        // >3-lesion-frame fraction per repetition
  hfs::CoverageStats pooled;       // all repetitions together

  double background_mean() const;
  double background_variance() const;
  double rich_mean() const;
  double rich_variance() const;
};

struct ComparisonReport {
  StrategyTrials heuristic;
  StrategyTrials random;
  /// Repetitions where heuristic background fraction < random's.
  std::size_t heuristic_wins = 0;
  std::size_t repetitions = 0;
};

/// Samples every video with both strategies in each repetition. Repetition r
/// and video v draw from Rng(seed').fork(r).fork(v) per strategy stream.
ComparisonReport run_coverage_experiment(const CoverageSpec& spec);
ComparisonReport run_coverage_experiment(const CoverageSpec& spec, const std::vector<hfs::VideoMeta>& metas);

/// Two-class clips: class 0 = drifting smooth Gaussian blobs + white noise;
/// class 1 = the same generator plus a sign-alternating (checkerboard)
/// speckle of random per-pixel magnitude.
struct TextureSpec {
  std::size_t videos_per_class = 200;
  std::size_t in_channels = 1;
  std::size_t frames = 8;
  std::size_t height = 64, width = 64;
  std::size_t blobs = 3;
  float blob_amplitude = 1.0f;
  float speckle_amplitude = 0.25f;
  float noise_amplitude = 0.1f;
  std::size_t levels = 2;  // pipeline wavelet depth, for the divisibility check
  std::uint64_t seed = 42;

  void validate() const;
};

struct TextureVideo {
  Tensor clip;  // (1, C, T, H, W)
  int label = 0;
  std::string video_id;
  std::string patient_id;
};

std::vector<TextureVideo> gen_texture_dataset(const TextureSpec& spec);

/// Batches clips [begin, begin + count) into one (count, C, T, H, W) tensor.
Tensor stack_clips(const std::vector<TextureVideo>& videos, std::size_t begin, std::size_t count);

struct DatasetEntry {
  std::string video_id;
  std::string file;  // relative to the manifest directory
  int label = 0;
  std::string patient_id;
};

/// Writes one TNSR per clip and `dir/dataset.json`.
void write_texture_dataset(const std::vector<TextureVideo>& videos, const std::filesystem::path& dir);
std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& manifest);

}  // namespace trinet::synth
