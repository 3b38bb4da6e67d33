#include "trinet/hfs_sampler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace trinet::hfs {

using nlohmann::json;

void SamplerConfig::validate() const {
  if (clips == 0 || clip_length == 0 || stride == 0)
    throw std::invalid_argument("SamplerConfig: N, T and t must all be >= 1");
}

void VideoMeta::validate() const {
  if (num_frames == 0) throw std::invalid_argument("VideoMeta " + video_id + ": num_frames must be >= 1");
  for (std::size_t i = 0; i < lesion_frames.size(); ++i) {
    if (lesion_frames[i] >= num_frames)
      throw std::invalid_argument("VideoMeta " + video_id + ": lesion frame " +
                                  std::to_string(lesion_frames[i]) + " outside [0, " +
                                  std::to_string(num_frames) + ")");
    if (i > 0 && lesion_frames[i] <= lesion_frames[i - 1])
      throw std::invalid_argument("VideoMeta " + video_id + ": lesion_frames must be sorted and unique");
  }
}

bool VideoMeta::is_lesion(std::size_t frame) const {
  return std::binary_search(lesion_frames.begin(), lesion_frames.end(), frame);
}

std::string_view to_string(VideoCase c) {
  switch (c) {
    case VideoCase::long_video: return "long";
    case VideoCase::medium_video: return "medium";
    case VideoCase::short_video: return "short";
  }
  return "?";
}

std::string_view to_string(Strategy s) {
  return s == Strategy::heuristic ? "heuristic" : "random";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "heuristic") return Strategy::heuristic;
  if (s == "random") return Strategy::random;
  throw std::invalid_argument("unknown strategy '" + std::string(s) + "'");
}

VideoCase parse_case(std::string_view s) {
  if (s == "long") return VideoCase::long_video;
  if (s == "medium") return VideoCase::medium_video;
  if (s == "short") return VideoCase::short_video;
  throw std::invalid_argument("unknown case '" + std::string(s) + "'");
}

std::vector<std::size_t> clip_frames(std::size_t start, const SamplerConfig& cfg, std::size_t num_frames) {
  cfg.validate();
  if (start >= num_frames)
    throw std::invalid_argument("clip_frames: start " + std::to_string(start) + " outside [0, " +
                                std::to_string(num_frames) + ")");
  std::vector<std::size_t> frames(cfg.clip_length);
  for (std::size_t j = 0; j < cfg.clip_length; ++j) frames[j] = (start + j * cfg.stride) % num_frames;
  return frames;
}

VideoCase case_of(std::size_t num_frames, const SamplerConfig& cfg) {
  cfg.validate();
  if (num_frames >= cfg.clips + cfg.span()) return VideoCase::long_video;
  if (num_frames >= cfg.span()) return VideoCase::medium_video;
  return VideoCase::short_video;
}

std::size_t stratum_width(std::size_t num_frames, const SamplerConfig& cfg) {
  if (case_of(num_frames, cfg) != VideoCase::long_video)
    throw std::invalid_argument("stratum_width: L=" + std::to_string(num_frames) +
                                " is not a long video for this config");
  return (num_frames - cfg.span()) / cfg.clips;
}

std::vector<std::size_t> plan_starts(std::size_t num_frames, const SamplerConfig& cfg, Rng& rng) {
  if (num_frames == 0) throw std::invalid_argument("plan_starts: L must be >= 1");
  std::vector<std::size_t> starts(cfg.clips);
  const auto last = static_cast<std::int64_t>(num_frames) - 1;
  switch (case_of(num_frames, cfg)) {
    case VideoCase::long_video: {
      const std::size_t width = stratum_width(num_frames, cfg);
      for (std::size_t i = 0; i < cfg.clips; ++i) starts[i] = i * width + rng.below(width);
      break;
    }
    case VideoCase::medium_video: {
      const std::size_t fixed = num_frames - cfg.span();
      for (std::size_t i = 0; i < cfg.clips; ++i) {
        starts[i] = i < fixed ? i
                              : static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(fixed), last));
      }
      break;
    }
    case VideoCase::short_video:
      for (auto& s : starts) s = static_cast<std::size_t>(rng.uniform_int(0, last));
      break;
  }
  return starts;
}

ClipPlan sample_clips(const VideoMeta& meta, const SamplerConfig& cfg, Strategy strategy, Rng& rng) {
  meta.validate();
  ClipPlan plan;
  plan.video_id = meta.video_id;
  plan.strategy = strategy;
  plan.config = cfg;
  plan.video_case = case_of(meta.num_frames, cfg);
  if (strategy == Strategy::heuristic) {
    plan.starts = plan_starts(meta.num_frames, cfg, rng);
  } else {
    plan.starts.resize(cfg.clips);
    for (auto& s : plan.starts)
      s = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(meta.num_frames) - 1));
  }
  plan.frames.reserve(cfg.clips);
  for (auto s : plan.starts) plan.frames.push_back(clip_frames(s, cfg, meta.num_frames));
  return plan;
}

void CoverageStats::merge(const CoverageStats& other) {
  if (histogram.size() < other.histogram.size()) histogram.resize(other.histogram.size(), 0);
  for (std::size_t i = 0; i < other.histogram.size(); ++i) histogram[i] += other.histogram[i];
  total_clips += other.total_clips;
  finalize();
}

void CoverageStats::finalize() {
  if (total_clips == 0) {
    background_fraction = rich_fraction = 0.0;
    return;
  }
  const auto total = static_cast<double>(total_clips);
  background_fraction = histogram.empty() ? 0.0 : static_cast<double>(histogram[0]) / total;
  std::size_t rich = 0;
  for (std::size_t i = 4; i < histogram.size(); ++i) rich += histogram[i];
  rich_fraction = static_cast<double>(rich) / total;
}

CoverageStats coverage_report(std::span<const ClipPlan> plans, std::span<const VideoMeta> metas) {
  std::unordered_map<std::string_view, const VideoMeta*> by_id;
  for (const auto& m : metas) by_id.emplace(m.video_id, &m);

  CoverageStats stats;
  for (const auto& plan : plans) {
    auto it = by_id.find(plan.video_id);
    if (it == by_id.end()) throw std::invalid_argument("coverage_report: unknown video '" + plan.video_id + "'");
    const VideoMeta& meta = *it->second;
    for (const auto& clip : plan.frames) {
      std::size_t hits = 0;
      for (auto f : clip) hits += meta.is_lesion(f) ? 1 : 0;
      if (stats.histogram.size() <= clip.size()) stats.histogram.resize(clip.size() + 1, 0);
      ++stats.histogram[hits];
      ++stats.total_clips;
    }
  }
  stats.finalize();
  return stats;
}

namespace {

VideoMeta meta_from_json(const json& j) {
  VideoMeta m;
  m.video_id = j.at("video_id").get<std::string>();
  m.patient_id = j.at("patient_id").get<std::string>();
  const int label = j.at("label").get<int>();
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  m.label = static_cast<Label>(label);
  const auto frames = j.at("num_frames").get<std::int64_t>();
  if (frames < 1) throw std::invalid_argument("num_frames must be >= 1");
  m.num_frames = static_cast<std::size_t>(frames);
  for (const auto& f : j.at("lesion_frames")) {
    const auto v = f.get<std::int64_t>();
    if (v < 0) throw std::invalid_argument("negative lesion frame");
    m.lesion_frames.push_back(static_cast<std::size_t>(v));
  }
  std::sort(m.lesion_frames.begin(), m.lesion_frames.end());
  m.lesion_frames.erase(std::unique(m.lesion_frames.begin(), m.lesion_frames.end()), m.lesion_frames.end());
  m.validate();
  return m;
}

}  // namespace

std::vector<VideoMeta> parse_annotations(std::string_view text) {
  std::vector<VideoMeta> metas;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      metas.push_back(meta_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("annotations line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, fresh] = seen.emplace(metas.back().video_id, line_no);
    if (!fresh)
      throw std::runtime_error("annotations line " + std::to_string(line_no) + ": duplicate video_id '" +
                               metas.back().video_id + "' (first on line " + std::to_string(it->second) + ")");
  }
  return metas;
}

std::vector<VideoMeta> read_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open annotations " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_annotations(ss.str());
}

std::string format_annotations(std::span<const VideoMeta> metas) {
  std::string out;
  for (const auto& m : metas) {
    json j = {{"video_id", m.video_id},
              {"patient_id", m.patient_id},
              {"label", static_cast<int>(m.label)},
              {"num_frames", m.num_frames},
              {"lesion_frames", m.lesion_frames}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string plan_to_json(const ClipPlan& plan) {
  json j = {{"video_id", plan.video_id},
            {"strategy", to_string(plan.strategy)},
            {"case", to_string(plan.video_case)},
            {"starts", plan.starts},
            {"frames", plan.frames},
            {"config", {{"N", plan.config.clips}, {"T", plan.config.clip_length}, {"t", plan.config.stride}}}};
  return j.dump();
}

ClipPlan plan_from_json(std::string_view text) {
  const json j = json::parse(text);
  ClipPlan p;
  p.video_id = j.at("video_id").get<std::string>();
  p.strategy = parse_strategy(j.at("strategy").get<std::string>());
  p.video_case = parse_case(j.at("case").get<std::string>());
  p.starts = j.at("starts").get<std::vector<std::size_t>>();
  p.frames = j.at("frames").get<std::vector<std::vector<std::size_t>>>();
  const auto& c = j.at("config");
  p.config = {c.at("N").get<std::size_t>(), c.at("T").get<std::size_t>(), c.at("t").get<std::size_t>()};
  return p;
}

}  // namespace trinet::hfs
