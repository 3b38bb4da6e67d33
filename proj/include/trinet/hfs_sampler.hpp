#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trinet/rng.hpp"

namespace trinet::hfs {

/// N clips of T frames each, frames `stride` apart.
struct SamplerConfig {
  std::size_t clips = 4;       // N
  std::size_t clip_length = 8; // T
  std::size_t stride = 8;      // t

  void validate() const;
  /// (T - 1) * t, the frame span of one clip minus one.
  std::size_t span() const { return (clip_length - 1) * stride; }
};

enum class Label : int { benign = 0, malignant = 1 };

struct VideoMeta {
  std::string video_id;
  std::string patient_id;
  Label label = Label::benign;
  std::size_t num_frames = 0;             // L
  std::vector<std::size_t> lesion_frames; // sorted, unique, each < L

  void validate() const;
  bool is_lesion(std::size_t frame) const;
};

enum class VideoCase { long_video, medium_video, short_video };
enum class Strategy { heuristic, random };

std::string_view to_string(VideoCase c);
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);
VideoCase parse_case(std::string_view s);

struct ClipPlan {
  std::string video_id;
  std::vector<std::size_t> starts;
  std::vector<std::vector<std::size_t>> frames;
  VideoCase video_case = VideoCase::long_video;
  Strategy strategy = Strategy::heuristic;
  SamplerConfig config;
};

/// f_j = (start + j * stride) mod L for j in [0, T).
std::vector<std::size_t> clip_frames(std::size_t start, const SamplerConfig& cfg, std::size_t num_frames);

/// Long iff L >= N + (T-1)t; Medium iff (T-1)t <= L < N + (T-1)t; Short otherwise.
VideoCase case_of(std::size_t num_frames, const SamplerConfig& cfg);

/// floor((L - (T-1)t) / N). Only defined for long videos.
std::size_t stratum_width(std::size_t num_frames, const SamplerConfig& cfg);

/// Heuristic start points (0-based).
///   long:   s_i = i * width + U{0..width-1}
///   medium: s_i = i for i < L - (T-1)t, the rest U{L-(T-1)t .. L-1}
///   short:  s_i = U{0..L-1}
std::vector<std::size_t> plan_starts(std::size_t num_frames, const SamplerConfig& cfg, Rng& rng);

ClipPlan sample_clips(const VideoMeta& meta, const SamplerConfig& cfg, Strategy strategy, Rng& rng);

struct CoverageStats {
  std::vector<std::size_t> histogram;  // index = lesion frames in the clip, 0..T
  std::size_t total_clips = 0;
  double background_fraction = 0.0;    // clips with no lesion frame
  double rich_fraction = 0.0;          // clips with more than 3 lesion frames

  void merge(const CoverageStats& other);
  void finalize();
};

/// Lesion-frame counts per clip, matched to metas by video_id.
CoverageStats coverage_report(std::span<const ClipPlan> plans, std::span<const VideoMeta> metas);

// --- file formats -----------------------------------------------------------

/// Annotation JSON Lines: {"video_id","patient_id","label","num_frames","lesion_frames"}.
/// Errors name the 1-based line number.
std::vector<VideoMeta> parse_annotations(std::string_view text);
std::vector<VideoMeta> read_annotations(const std::filesystem::path& path);
std::string format_annotations(std::span<const VideoMeta> metas);

std::string plan_to_json(const ClipPlan& plan);
ClipPlan plan_from_json(std::string_view json);

}  // namespace trinet::hfs
