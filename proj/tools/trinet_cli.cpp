// Command-line driver: sampling, coverage, wavelet checks, forward passes,
// synthetic data and the linear-probe protocol. Reports are JSON.

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trinet/evalkit.hpp"
#include "trinet/experiment.hpp"
#include "trinet/fusion_head.hpp"
#include "trinet/hfs_sampler.hpp"
#include "trinet/probe.hpp"
#include "trinet/synthgen.hpp"
#include "trinet/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trinet;

namespace {

// Exit codes: 0 success, 1 a validation failed, 2 bad input or runtime error.
constexpr int kValidationFailed = 1;
constexpr int kInputError = 2;

/// JSON config files for CLI11. Top-level keys set shared flags; an object
/// keyed by a subcommand name sets that subcommand's flags, e.g.
///   {"seed": 3, "coverage": {"videos": 500}}
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return collect(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static json collect(const CLI::App* app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->as<std::string>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      json s = collect(sub, default_also);
      if (!s.empty()) j[sub->get_name()] = s;
    }
    return j;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        flatten(value, next, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

struct Shared {
  std::uint64_t seed = 42;
  std::string out;
  bool pretty = false;
};

/// Writes `text` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_atomic(const Tensor& t, const fs::path& path) {
  const auto bytes = encode_tnsr(t);
  write_atomic(path, std::string(bytes.begin(), bytes.end()));
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// JSON to --out (or stdout); with --pretty, the table goes to stdout and the
/// JSON only to --out when given.
void emit(const Shared& s, const json& report, const std::string& table) {
  if (!s.out.empty()) write_atomic(s.out, report.dump(2) + "\n");
  if (s.pretty) {
    std::cout << table;
  } else if (s.out.empty()) {
    std::cout << report.dump(2) << "\n";
  }
}

json metrics_json(const eval::MetricsReport& m) {
  json j = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}, {"balanced_accuracy", m.balanced_accuracy()}};
  json undefined = json::array();
  for (std::size_t i = 0; i < eval::kMetricCount; ++i) {
    const auto metric = static_cast<eval::Metric>(i);
    j[std::string(eval::metric_name(metric))] = m.get(metric);
    if (m.is_undefined(metric)) undefined.push_back(eval::metric_name(metric));
  }
  j["undefined"] = undefined;
  return j;
}

json bootstrap_json(const eval::BootstrapReport& b) {
  json j = {{"resamples", b.resamples}, {"level", b.level}};
  for (std::size_t i = 0; i < eval::kMetricCount; ++i) {
    const auto& iv = b.metrics[i];
    j[std::string(eval::metric_name(static_cast<eval::Metric>(i)))] = {
        {"mean", iv.mean}, {"lower", iv.lower}, {"upper", iv.upper}, {"half_width", iv.half_width}};
  }
  return j;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

std::string metrics_row(const eval::MetricsReport& m, const eval::BootstrapReport* b) {
  std::string row;
  for (std::size_t i = 0; i < eval::kMetricCount; ++i) {
    std::string cell = fmt(m.values[i]);
    if (b) cell += " ±" + fmt(b->metrics[i].half_width);
    row += "  " + cell;
  }
  return row;
}

std::string metrics_header(bool with_ci) {
  std::string h;
  for (std::size_t i = 0; i < eval::kMetricCount; ++i) {
    std::string name(eval::metric_name(static_cast<eval::Metric>(i)));
    h += "  " + name + std::string((with_ci ? 14 : 6) - std::min<std::size_t>(name.size(), 6), ' ');
  }
  return h;
}

hfs::SamplerConfig sampler_from(std::size_t n, std::size_t t_len, std::size_t stride) {
  hfs::SamplerConfig cfg{n, t_len, stride};
  cfg.validate();
  return cfg;
}

void add_sampler_flags(CLI::App* cmd, std::size_t& n, std::size_t& t_len, std::size_t& stride) {
  cmd->add_option("--clips", n, "Clips per video (N)")->check(CLI::PositiveNumber);
  cmd->add_option("--clip-length", t_len, "Frames per clip (T)")->check(CLI::PositiveNumber);
  cmd->add_option("--stride", stride, "Frame stride inside a clip (t)")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string annotations;
  std::string strategy = "heuristic";
  std::size_t clips = 4, clip_length = 8, stride = 8;
};

int run_sample(const Shared& s, const SampleArgs& a) {
  const auto cfg = sampler_from(a.clips, a.clip_length, a.stride);
  const auto strategy = hfs::parse_strategy(a.strategy);
  const auto metas = hfs::read_annotations(a.annotations);
  const Rng root(derive_seed(s.seed, seed_domain::sampler));
  json plans = json::array();
  std::string table = "video_id        case    starts\n";
  for (std::size_t v = 0; v < metas.size(); ++v) {
    Rng rng = root.fork(v);
    const auto plan = hfs::sample_clips(metas[v], cfg, strategy, rng);
    plans.push_back(json::parse(hfs::plan_to_json(plan)));
    std::string starts;
    for (auto st : plan.starts) starts += (starts.empty() ? "" : ",") + std::to_string(st);
    std::string id = plan.video_id;
    id.resize(std::max<std::size_t>(id.size(), 15), ' ');
    std::string c(hfs::to_string(plan.video_case));
    c.resize(std::max<std::size_t>(c.size(), 7), ' ');
    table += id + " " + c + " " + starts + "\n";
  }
  const json report = {{"command", "sample"},
                       {"seed", s.seed},
                       {"strategy", hfs::to_string(strategy)},
                       {"config", {{"N", cfg.clips}, {"T", cfg.clip_length}, {"t", cfg.stride}}},
                       {"videos", metas.size()},
                       {"plans", plans}};
  emit(s, report, table);
  return 0;
}

// ---------------------------------------------------------------- coverage

struct CoverageArgs {
  std::string annotations;
  synth::CoverageSpec spec;
  std::size_t clips = 4, clip_length = 8, stride = 8;
};

json trials_json(const synth::StrategyTrials& t) {
  return {{"background_fraction_mean", t.background_mean()},
          {"background_fraction_variance", t.background_variance()},
          {"rich_fraction_mean", t.rich_mean()},
          {"rich_fraction_variance", t.rich_variance()},
          {"background_fraction_per_repetition", t.background},
          {"rich_fraction_per_repetition", t.rich},
          {"histogram", t.pooled.histogram},
          {"total_clips", t.pooled.total_clips}};
}

int run_coverage(const Shared& s, CoverageArgs a) {
  a.spec.sampler = sampler_from(a.clips, a.clip_length, a.stride);
  a.spec.seed = s.seed;
  synth::ComparisonReport r;
  std::string source;
  if (a.annotations.empty()) {
    r = synth::run_coverage_experiment(a.spec);
    source = "synthetic";
  } else {
    r = synth::run_coverage_experiment(a.spec, hfs::read_annotations(a.annotations));
    source = a.annotations;
  }
  json report = {{"command", "coverage"},
                 {"seed", s.seed},
                 {"source", source},
                 {"repetitions", r.repetitions},
                 {"heuristic_wins", r.heuristic_wins},
                 {"heuristic", trials_json(r.heuristic)},
                 {"random", trials_json(r.random)}};
  if (a.annotations.empty())
    report["spec"] = {{"videos", a.spec.videos},
                      {"min_frames", a.spec.min_frames},
                      {"max_frames", a.spec.max_frames},
                      {"min_width", a.spec.min_width},
                      {"max_width", a.spec.max_width}};
  std::string table = "strategy    background-only   >3 lesion frames\n";
  table += "heuristic   " + fmt(r.heuristic.background_mean()) + "            " + fmt(r.heuristic.rich_mean()) + "\n";
  table += "random      " + fmt(r.random.background_mean()) + "            " + fmt(r.random.rich_mean()) + "\n";
  table += "heuristic lower in " + std::to_string(r.heuristic_wins) + " of " + std::to_string(r.repetitions) +
           " repetitions\n";
  emit(s, report, table);
  return 0;
}

// ---------------------------------------------------------------- wavelet-roundtrip

struct RoundtripArgs {
  std::size_t channels = 1, height = 64, width = 64, levels = 2, trials = 10;
  double tolerance = 1e-5;
};

int run_roundtrip(const Shared& s, const RoundtripArgs& a) {
  if (a.channels == 0 || a.height == 0 || a.width == 0 || a.trials == 0)
    throw std::invalid_argument("wavelet-roundtrip: dims and trials must be positive");
  const std::size_t block = std::size_t{1} << a.levels;
  if (a.height % block != 0 || a.width % block != 0)
    throw std::invalid_argument("wavelet-roundtrip: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " is not divisible by 2^" + std::to_string(a.levels));
  Rng rng(derive_seed(s.seed, seed_domain::wavelet));
  backbone::PipelineShape shape;
  shape.in_channels = a.channels;
  const auto identity = wavelet::WtcrParams::init(rng, shape, a.levels, wavelet::HfInit::identity, 0.0f);
  double max_error = 0.0, max_energy = 0.0;
  for (std::size_t i = 0; i < a.trials; ++i) {
    const Tensor x = seeded_uniform({a.channels, a.height, a.width}, layout::chw, -1.0f, 1.0f, rng);
    const auto pyramid = wavelet::multilevel_decompose(x, a.levels);
    max_error = std::max<double>(max_error, max_abs_diff(wavelet::wtcr_reconstruct(pyramid, identity), x));
    if (a.levels > 0) {
      const auto b = wavelet::haar_decompose(x);
      const double e = sum_of_squares(b.ll) + sum_of_squares(b.lh) + sum_of_squares(b.hl) + sum_of_squares(b.hh);
      const double ex = sum_of_squares(x);
      if (ex > 0) max_energy = std::max(max_energy, std::abs(e - ex) / ex);
    }
  }
  const bool pass = max_error <= a.tolerance && max_energy <= a.tolerance;
  const json report = {{"command", "wavelet-roundtrip"},
                       {"seed", s.seed},
                       {"dims", {a.channels, a.height, a.width}},
                       {"levels", a.levels},
                       {"trials", a.trials},
                       {"tolerance", a.tolerance},
                       {"max_abs_error", max_error},
                       {"max_energy_relative_error", max_energy},
                       {"pass", pass}};
  emit(s, report,
       std::string(pass ? "PASS" : "FAIL") + "  max error " + fmt(max_error, 9) + "  energy " + fmt(max_energy, 9) +
           "\n");
  return pass ? 0 : kValidationFailed;
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::string dir;
  synth::TextureSpec texture;
  std::size_t annotation_videos = 100;
  bool with_model = false;
  std::uint64_t init_seed = 7;
};

int run_gen(const Shared& s, GenArgs a) {
  if (a.dir.empty()) throw std::invalid_argument("gen-data: --dir is required");
  const fs::path dir = a.dir;
  a.texture.seed = s.seed;
  const auto videos = synth::gen_texture_dataset(a.texture);
  synth::write_texture_dataset(videos, dir);

  json report = {{"command", "gen-data"},
                 {"seed", s.seed},
                 {"dataset", (dir / "dataset.json").string()},
                 {"videos", videos.size()},
                 {"speckle_amplitude", a.texture.speckle_amplitude}};

  if (a.annotation_videos > 0) {
    synth::CoverageSpec cs;
    cs.videos = a.annotation_videos;
    cs.seed = s.seed;
    const auto metas = synth::gen_coverage_dataset(cs);
    write_atomic(dir / "annotations.jsonl", hfs::format_annotations(metas));
    report["annotations"] = (dir / "annotations.jsonl").string();
  }
  if (a.with_model) {
    backbone::PipelineShape shape;
    shape.in_channels = a.texture.in_channels;
    shape.frames = a.texture.frames;
    shape.height = a.texture.height;
    shape.width = a.texture.width;
    fusion::InitOptions opts;
    opts.seed = a.init_seed;
    opts.levels = a.texture.levels;
    fusion::save_model(fusion::ModelParams::init(shape, opts), dir / "model");
    report["model"] = (dir / "model" / "model.json").string();
  }
  emit(s, report, "wrote " + std::to_string(videos.size()) + " clips to " + dir.string() + "\n");
  return 0;
}

// ---------------------------------------------------------------- forward

struct ForwardArgs {
  std::string dataset;
  std::string model;
  std::string embeddings;
  std::string predictions;
  std::string logits;
  std::size_t batch = 8;
  std::size_t levels = 2;
};

int run_forward(const Shared& s, const ForwardArgs& a) {
  if (a.predictions.empty()) throw std::invalid_argument("forward: --predictions is required");
  const fs::path manifest = a.dataset;
  const auto entries = synth::read_dataset_manifest(manifest);
  if (entries.empty()) throw std::invalid_argument("forward: dataset has no clips");
  std::vector<Tensor> clips;
  for (const auto& e : entries) clips.push_back(load(manifest.parent_path() / e.file));

  fusion::ModelParams model;
  if (!a.model.empty()) {
    model = fusion::load_model(a.model);
  } else {
    backbone::PipelineShape shape;
    const Tensor& c = clips.front();
    if (c.rank() != 5) throw std::invalid_argument("forward: clips must be rank 5 (1, C, T, H, W)");
    shape.in_channels = c.dim(1);
    shape.frames = c.dim(2);
    shape.height = c.dim(3);
    shape.width = c.dim(4);
    fusion::InitOptions opts;
    opts.seed = s.seed;
    opts.levels = a.levels;
    model = fusion::ModelParams::init(shape, opts);
  }
  const auto provider = a.embeddings.empty() ? backbone::FrameFeatureProvider::stub(model.encoder)
                                             : backbone::FrameFeatureProvider::from_directory(a.embeddings);

  const std::size_t batch = std::max<std::size_t>(1, a.batch);
  std::vector<float> all_logits;
  std::string lines;
  for (std::size_t begin = 0; begin < clips.size(); begin += batch) {
    const std::size_t count = std::min(batch, clips.size() - begin);
    const std::span<const Tensor> part(clips.data() + begin, count);
    const Tensor x = concat(part, 0);
    std::vector<backbone::ClipKey> keys;
    for (std::size_t i = 0; i < count; ++i) keys.push_back({entries[begin + i].video_id, 0});
    const Tensor logits = fusion::forward(x, model, provider, keys);
    const auto probs = fusion::malignant_probability(logits);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& e = entries[begin + i];
      const json line = {{"video_id", e.video_id},
                         {"clip_index", 0},
                         {"patient_id", e.patient_id},
                         {"label", e.label},
                         {"logits", {logits[2 * i], logits[2 * i + 1]}},
                         {"prob_malignant", probs[i]}};
      lines += line.dump() + "\n";
      all_logits.push_back(logits[2 * i]);
      all_logits.push_back(logits[2 * i + 1]);
    }
  }
  write_atomic(a.predictions, lines);
  if (!a.logits.empty()) save_atomic(Tensor({clips.size(), 2}, layout::generic(2), all_logits), a.logits);

  const json report = {{"command", "forward"},
                       {"seed", s.seed},
                       {"clips", clips.size()},
                       {"provider", a.embeddings.empty() ? "stub" : "files"},
                       {"predictions", a.predictions}};
  emit(s, report, "wrote " + std::to_string(clips.size()) + " predictions to " + a.predictions + "\n");
  return 0;
}

// ---------------------------------------------------------------- train-probe

struct ProbeArgs {
  std::string dataset;
  std::string model;
  std::string features = "wtcr";
  synth::TextureSpec texture;
  std::size_t kfold = 0;
  std::size_t bootstrap = 0;
  double level = 0.95;
  bool shuffle_labels = false;
  probe::TrainOptions train;
  std::string training_log;
  std::string probe_out;
  std::uint64_t init_seed = 7;
};

struct LoadedVideos {
  std::vector<synth::TextureVideo> videos;
  std::string source;
};

LoadedVideos load_videos(const ProbeArgs& a, std::uint64_t seed) {
  LoadedVideos out;
  if (a.dataset.empty()) {
    auto spec = a.texture;
    spec.seed = seed;
    out.videos = synth::gen_texture_dataset(spec);
    out.source = "generated";
    return out;
  }
  const fs::path manifest = a.dataset;
  for (const auto& e : synth::read_dataset_manifest(manifest))
    out.videos.push_back({load(manifest.parent_path() / e.file), e.label, e.video_id, e.patient_id});
  out.source = a.dataset;
  return out;
}

int run_train_probe(const Shared& s, const ProbeArgs& a) {
  const auto source = experiment::parse_feature_source(a.features);
  const auto data = load_videos(a, s.seed);
  if (data.videos.empty()) throw std::invalid_argument("train-probe: no videos");
  const Tensor& first = data.videos.front().clip;

  fusion::ModelParams model;
  if (!a.model.empty()) {
    model = fusion::load_model(a.model);
  } else {
    backbone::PipelineShape shape;
    shape.in_channels = first.dim(1);
    shape.frames = first.dim(2);
    shape.height = first.dim(3);
    shape.width = first.dim(4);
    fusion::InitOptions opts;
    opts.seed = a.init_seed;
    opts.levels = a.texture.levels;
    model = fusion::ModelParams::init(shape, opts);
  }

  const auto x = experiment::extract_features(data.videos, model, source);
  std::vector<int> labels;
  std::vector<std::string> ids, patients;
  std::map<std::string, int> patient_label;
  for (const auto& v : data.videos) {
    labels.push_back(v.label);
    ids.push_back(v.video_id);
    patients.push_back(v.patient_id);
    const auto [it, fresh] = patient_label.emplace(v.patient_id, v.label);
    if (!fresh && it->second != v.label)
      throw std::invalid_argument("train-probe: patient " + v.patient_id + " has videos of both classes");
  }
  if (a.shuffle_labels) {
    Rng perm(derive_seed(s.seed, seed_domain::probe));
    perm.shuffle(labels.begin(), labels.end());
    patient_label.clear();
    // Labels now vary within a patient; stratify on the first video's label.
    for (std::size_t i = 0; i < labels.size(); ++i) patient_label.emplace(patients[i], labels[i]);
  }
  std::vector<eval::PatientLabel> pl;
  for (const auto& [p, l] : patient_label) pl.push_back({p, l});

  const std::size_t k = a.kfold > 1 ? a.kfold : 5;
  const std::size_t runs = a.kfold > 1 ? a.kfold : 1;
  Rng split_rng(derive_seed(s.seed, seed_domain::eval));
  const auto folds = eval::kfold_split(pl, k, split_rng);
  Rng boot_rng(derive_seed(s.seed, seed_domain::eval) ^ 0x426F6F74ULL);

  json fold_reports = json::array();
  std::vector<std::array<double, eval::kMetricCount + 1>> per_fold;
  std::string log_lines;
  std::string table = "fold" + metrics_header(a.bootstrap > 0) + "  bacc\n";
  for (std::size_t f = 0; f < runs; ++f) {
    const auto split = experiment::split_by_fold(patients, folds, f);
    const auto run = experiment::run_probe(x, labels, ids, patients, split, a.train);
    json fr = {{"fold", f},
               {"train_videos", split.train.size()},
               {"test_videos", split.test.size()},
               {"train", metrics_json(run.train)},
               {"test", metrics_json(run.test)},
               {"final_loss", run.loss_log.back()}};
    std::optional<eval::BootstrapReport> boot;
    if (a.bootstrap > 0) {
      boot = eval::bootstrap_ci(run.test_predictions, a.bootstrap, a.level, boot_rng);
      fr["bootstrap"] = bootstrap_json(*boot);
    }
    fold_reports.push_back(fr);
    std::array<double, eval::kMetricCount + 1> row{};
    for (std::size_t i = 0; i < eval::kMetricCount; ++i) row[i] = run.test.values[i];
    row[eval::kMetricCount] = run.test.balanced_accuracy();
    per_fold.push_back(row);
    table += std::to_string(f) + "   " + metrics_row(run.test, boot ? &*boot : nullptr) + "  " +
             fmt(run.test.balanced_accuracy()) + "\n";

    if (!a.training_log.empty())
      for (std::size_t e = 0; e < run.loss_log.size(); ++e)
        log_lines += json{{"fold", f}, {"epoch", e}, {"loss", run.loss_log[e]}}.dump() + "\n";
    if (!a.probe_out.empty()) {
      const std::string stem = runs == 1 ? a.probe_out : a.probe_out + "_fold" + std::to_string(f);
      probe::save_probe(run.params, run.standardizer, stem);
    }
  }

  json summary = json::object();
  for (std::size_t i = 0; i <= eval::kMetricCount; ++i) {
    std::vector<double> xs;
    for (const auto& row : per_fold) xs.push_back(row[i]);
    const auto ms = eval::mean_std(xs);
    const std::string name =
        i == eval::kMetricCount ? "balanced_accuracy" : std::string(eval::metric_name(static_cast<eval::Metric>(i)));
    summary[name] = {{"mean", ms.mean}, {"std", ms.std}};
  }
  if (runs > 1) {
    table += "mean±std";
    for (std::size_t i = 0; i <= eval::kMetricCount; ++i) {
      std::vector<double> xs;
      for (const auto& row : per_fold) xs.push_back(row[i]);
      const auto ms = eval::mean_std(xs);
      table += "  " + fmt(ms.mean) + "±" + fmt(ms.std);
    }
    table += "\n";
  }
  if (!a.training_log.empty()) write_atomic(a.training_log, log_lines);

  const json report = {{"command", "train-probe"},
                       {"seed", s.seed},
                       {"source", data.source},
                       {"features", experiment::to_string(source)},
                       {"videos", data.videos.size()},
                       {"shuffled_labels", a.shuffle_labels},
                       {"kfold", runs > 1 ? runs : 0},
                       {"options", {{"learning_rate", a.train.learning_rate}, {"epochs", a.train.epochs},
                                    {"l2", a.train.l2}}},
                       {"folds", fold_reports},
                       {"summary", summary},
                       {"test_balanced_accuracy", summary["balanced_accuracy"]["mean"]}};
  emit(s, report, table);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string predictions;
  double threshold = 0.5;
  std::size_t bootstrap = 0;
  double level = 0.95;
};

int run_eval(const Shared& s, const EvalArgs& a) {
  const std::string text = read_text(a.predictions);
  struct Acc {
    std::vector<double> probs;
    std::string patient;
    int label = -1;
  };
  std::map<std::string, Acc> by_video;
  std::vector<std::string> order;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = a.predictions + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    try {
      const auto id = j.at("video_id").get<std::string>();
      const double p = j.at("prob_malignant").get<double>();
      const int label = j.at("label").get<int>();
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("prob_malignant outside [0, 1]");
      if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
      auto [it, fresh] = by_video.try_emplace(id);
      if (fresh) order.push_back(id);
      Acc& acc = it->second;
      if (acc.label >= 0 && acc.label != label) throw std::invalid_argument("conflicting labels for " + id);
      acc.label = label;
      acc.patient = j.value("patient_id", id);
      acc.probs.push_back(p);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  if (order.empty()) throw std::invalid_argument("eval: " + a.predictions + " holds no predictions");

  std::vector<eval::Prediction> preds;
  for (const auto& id : order) {
    const auto& acc = by_video.at(id);
    preds.push_back({id, acc.patient, acc.label, eval::aggregate_clips(acc.probs)});
  }
  const auto m = eval::compute_metrics(preds, a.threshold);
  json report = {{"command", "eval"},
                 {"seed", s.seed},
                 {"videos", preds.size()},
                 {"threshold", a.threshold},
                 {"metrics", metrics_json(m)}};
  std::optional<eval::BootstrapReport> boot;
  if (a.bootstrap > 0) {
    Rng rng(derive_seed(s.seed, seed_domain::eval));
    boot = eval::bootstrap_ci(preds, a.bootstrap, a.level, rng, a.threshold);
    report["bootstrap"] = bootstrap_json(*boot);
  }
  emit(s, report, metrics_header(boot.has_value()) + "\n" + metrics_row(m, boot ? &*boot : nullptr) + "\n");
  return 0;
}

void add_texture_flags(CLI::App* cmd, synth::TextureSpec& t) {
  cmd->add_option("--videos-per-class", t.videos_per_class, "Synthetic clips per class")->check(CLI::PositiveNumber);
  cmd->add_option("--speckle", t.speckle_amplitude, "Class-1 checkerboard speckle amplitude");
  cmd->add_option("--noise", t.noise_amplitude, "White-noise amplitude");
  cmd->add_option("--blobs", t.blobs, "Drifting blobs per clip");
  cmd->add_option("--frames", t.frames, "Frames per clip (T)")->check(CLI::PositiveNumber);
  cmd->add_option("--height", t.height, "Frame height")->check(CLI::PositiveNumber);
  cmd->add_option("--width", t.width, "Frame width")->check(CLI::PositiveNumber);
  cmd->add_option("--levels", t.levels, "Wavelet depth M");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound video classification toolkit: sampling, wavelet branch, fusion and evaluation"};
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.require_subcommand(1);

  Shared shared;
  app.add_option("--seed", shared.seed, "Global seed; modules derive their own seeds from it");
  app.set_config("--config", "", "JSON config file; command-line flags override its values");
  app.add_option("--out", shared.out, "Write the JSON report here instead of stdout");
  app.add_flag("--pretty", shared.pretty, "Print a human-readable table on stdout");

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Plan clips for every annotated video");
  c_sample->add_option("--annotations", sample.annotations, "Annotation JSON Lines file")->required();
  c_sample->add_option("--strategy", sample.strategy, "heuristic or random")
      ->check(CLI::IsMember({"heuristic", "random"}));
  add_sampler_flags(c_sample, sample.clips, sample.clip_length, sample.stride);

  CoverageArgs coverage;
  auto* c_cov = app.add_subcommand("coverage", "Compare lesion coverage of the two sampling strategies");
  c_cov->add_option("--annotations", coverage.annotations, "Use these videos instead of the synthetic spec");
  c_cov->add_option("--videos", coverage.spec.videos, "Synthetic videos")->check(CLI::PositiveNumber);
  c_cov->add_option("--min-frames", coverage.spec.min_frames, "Shortest synthetic video");
  c_cov->add_option("--max-frames", coverage.spec.max_frames, "Longest synthetic video");
  c_cov->add_option("--min-width", coverage.spec.min_width, "Narrowest lesion window");
  c_cov->add_option("--max-width", coverage.spec.max_width, "Widest lesion window");
  c_cov->add_option("--repetitions", coverage.spec.repetitions, "Sampling repetitions")->check(CLI::PositiveNumber);
  add_sampler_flags(c_cov, coverage.clips, coverage.clip_length, coverage.stride);

  RoundtripArgs rt;
  auto* c_rt = app.add_subcommand("wavelet-roundtrip", "Check Haar perfect reconstruction on random tensors");
  c_rt->add_option("--channels", rt.channels, "Channels");
  c_rt->add_option("--height", rt.height, "Height");
  c_rt->add_option("--width", rt.width, "Width");
  c_rt->add_option("--levels", rt.levels, "Decomposition depth M");
  c_rt->add_option("--trials", rt.trials, "Random tensors to check");
  c_rt->add_option("--tolerance", rt.tolerance, "Largest accepted error");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Write a synthetic texture dataset, annotations and optionally a model");
  c_gen->add_option("--dir", gen.dir, "Output directory")->required();
  add_texture_flags(c_gen, gen.texture);
  c_gen->add_option("--annotation-videos", gen.annotation_videos, "Annotated videos for sampling (0 = none)");
  c_gen->add_flag("--with-model", gen.with_model, "Also write seeded model weights to DIR/model");
  c_gen->add_option("--init-seed", gen.init_seed, "Seed for the model weights");

  ForwardArgs fwd;
  auto* c_fwd = app.add_subcommand("forward", "Run the three-branch network over a dataset");
  c_fwd->add_option("--dataset", fwd.dataset, "dataset.json manifest")->required();
  c_fwd->add_option("--model", fwd.model, "model.json manifest (default: seeded weights from --seed)");
  c_fwd->add_option("--embeddings", fwd.embeddings, "Directory of stored frame embeddings (default: stub encoder)");
  c_fwd->add_option("--predictions", fwd.predictions, "Output JSON Lines file")->required();
  c_fwd->add_option("--logits", fwd.logits, "Also write the (clips, 2) logits as a TNSR file");
  c_fwd->add_option("--batch", fwd.batch, "Clips per forward pass");
  c_fwd->add_option("--levels", fwd.levels, "Wavelet depth M for seeded weights");

  ProbeArgs pr;
  auto* c_probe = app.add_subcommand("train-probe", "Train a logistic probe on pooled branch features");
  c_probe->add_option("--dataset", pr.dataset, "dataset.json manifest (default: generate from the texture flags)");
  c_probe->add_option("--model", pr.model, "model.json manifest (default: seeded weights from --init-seed)");
  c_probe->add_option("--init-seed", pr.init_seed, "Seed for model weights when --model is absent");
  c_probe->add_option("--features", pr.features, "Branch feeding the probe")
      ->check(CLI::IsMember({"wtcr", "backbone", "fused"}));
  add_texture_flags(c_probe, pr.texture);
  c_probe->add_option("--kfold", pr.kfold, "Run all k folds and report mean±std (0 = hold out one fold of 5)");
  c_probe->add_option("--bootstrap", pr.bootstrap, "Bootstrap resamples for ±half-width columns (0 = off)");
  c_probe->add_option("--level", pr.level, "Bootstrap confidence level");
  c_probe->add_flag("--shuffle-labels", pr.shuffle_labels, "Permute labels across videos (null control)");
  c_probe->add_option("--lr", pr.train.learning_rate, "Learning rate");
  c_probe->add_option("--epochs", pr.train.epochs, "Full-batch epochs");
  c_probe->add_option("--l2", pr.train.l2, "L2 penalty on the weights");
  c_probe->add_option("--training-log", pr.training_log, "JSON Lines file of (fold, epoch, loss)");
  c_probe->add_option("--probe-out", pr.probe_out, "Save probe weights as STEM.tnsr + STEM.json");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Aggregate clip predictions per video and compute metrics");
  c_eval->add_option("--predictions", ev.predictions, "JSON Lines predictions (from forward)")->required();
  c_eval->add_option("--threshold", ev.threshold, "Malignant decision threshold");
  c_eval->add_option("--bootstrap", ev.bootstrap, "Bootstrap resamples (0 = off)");
  c_eval->add_option("--level", ev.level, "Bootstrap confidence level");

  // Shared flags may follow the subcommand name.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_sample->parsed()) return run_sample(shared, sample);
    if (c_cov->parsed()) return run_coverage(shared, coverage);
    if (c_rt->parsed()) return run_roundtrip(shared, rt);
    if (c_gen->parsed()) return run_gen(shared, gen);
    if (c_fwd->parsed()) return run_forward(shared, fwd);
    if (c_probe->parsed()) return run_train_probe(shared, pr);
    if (c_eval->parsed()) return run_eval(shared, ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
