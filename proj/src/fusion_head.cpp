#include "trinet/fusion_head.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace trinet::fusion {

using nlohmann::json;

FusionParams FusionParams::init(Rng& rng, std::size_t channels, float bias_range) {
  FusionParams p;
  p.up1 = nn::init_pointwise(rng, channels, 2 * channels, bias_range);
  p.up2 = nn::init_pointwise(rng, 2 * channels, 3 * channels, bias_range);
  p.down1 = nn::init_pointwise(rng, 3 * channels, 2 * channels, bias_range);
  p.down2 = nn::init_pointwise(rng, 2 * channels, channels, bias_range);
  p.head_conv = nn::init_pointwise(rng, channels, 2 * channels, bias_range);
  p.head_bn = nam::BnParams::identity(2 * channels);
  p.fc = nn::init_linear(rng, 2 * channels, 2, bias_range);
  return p;
}

Tensor channel_project(const Tensor& x, const nn::ConvParams& proj) { return nn::conv_pointwise(x, proj); }

FusionTrace pyramid_fuse_trace(const Tensor& spatiotemporal, const Tensor& attended, const Tensor& frequency, const FusionParams& p) {
  nn::require_rank(spatiotemporal, 5, "pyramid_fuse");
  if (spatiotemporal.dims() != attended.dims() || spatiotemporal.dims() != frequency.dims())
    throw std::invalid_argument("pyramid_fuse: branch shapes differ: " + dims_to_string(spatiotemporal.dims()) + " " +
                                dims_to_string(attended.dims()) + " " + dims_to_string(frequency.dims()));
  FusionTrace tr;
  const std::array<Tensor, 2> pair{spatiotemporal, attended};
  const std::array<Tensor, 3> triple{spatiotemporal, attended, frequency};
  tr.paired = concat(pair, 1);
  tr.lifted = add(tr.paired, channel_project(spatiotemporal, p.up1));
  tr.merged = add(channel_project(tr.lifted, p.up2), concat(triple, 1));
  tr.refined = add(channel_project(tr.merged, p.down1), tr.paired);
  tr.fused = add(channel_project(tr.refined, p.down2), spatiotemporal);
  return tr;
}

Tensor pyramid_fuse(const Tensor& spatiotemporal, const Tensor& attended, const Tensor& frequency, const FusionParams& p) {
  return pyramid_fuse_trace(spatiotemporal, attended, frequency, p).fused;
}

Tensor classify(const Tensor& fused, const FusionParams& p) {
  nn::require_rank(fused, 5, "classify");
  const Tensor h = relu(nam::batch_norm(channel_project(fused, p.head_conv), p.head_bn));
  return nn::linear(nn::global_average(h), p.fc);
}

std::vector<double> malignant_probability(const Tensor& logits) {
  nn::require_rank(logits, 2, "malignant_probability");
  if (logits.dim(1) != 2) throw std::invalid_argument("malignant_probability: expected two logits per row");
  std::vector<double> out(logits.dim(0));
  for (std::size_t b = 0; b < out.size(); ++b) {
    const double d = static_cast<double>(logits[2 * b + 1]) - logits[2 * b];
    out[b] = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  return out;
}

ModelParams ModelParams::init(const backbone::PipelineShape& shape, const InitOptions& opts) {
  shape.validate();
  ModelParams m;
  m.shape = shape;
  Rng bb(derive_seed(opts.seed, seed_domain::backbone));
  Rng enc(derive_seed(opts.seed, seed_domain::provider));
  Rng wt(derive_seed(opts.seed, seed_domain::wavelet));
  Rng fu(derive_seed(opts.seed, seed_domain::fusion));
  m.backbone = backbone::SpatioTemporalParams::init(bb, shape, opts.bias_range);
  m.encoder = backbone::StubEncoderParams::init(enc, shape, opts.bias_range);
  m.nam_bn = nam::BnParams::identity(shape.channels);
  m.nam_cfg = {shape.channels, 1e-5f};
  m.wtcr = wavelet::WtcrParams::init(wt, shape, opts.levels, opts.hf_init, opts.bias_range);
  m.fusion = FusionParams::init(fu, shape.channels, opts.bias_range);
  return m;
}

namespace {

template <typename Fn>
void visit_conv(const std::string& name, nn::ConvParams& c, Fn& fn) {
  fn(name + ".weight", c.weight);
  fn(name + ".bias", c.bias);
}

template <typename Fn>
void visit_block(const std::string& name, backbone::ResBlockParams& b, Fn& fn) {
  visit_conv(name + ".conv", b.conv, fn);
  visit_conv(name + ".shortcut", b.shortcut, fn);
}

template <typename Fn>
void visit_st(const std::string& name, backbone::SpatioTemporalParams& p, Fn& fn) {
  visit_conv(name + ".stem", p.spatial.stem, fn);
  visit_block(name + ".block_a", p.spatial.block_a, fn);
  visit_block(name + ".block_b", p.spatial.block_b, fn);
  visit_conv(name + ".temporal", p.temporal, fn);
}

template <typename Fn>
void visit_all(ModelParams& m, Fn& fn) {
  visit_st("backbone", m.backbone, fn);
  visit_conv("encoder.stem", m.encoder.stem, fn);
  visit_block("encoder.block", m.encoder.block, fn);
  visit_conv("encoder.projection", m.encoder.projection, fn);
  for (std::size_t i = 0; i < m.wtcr.hf.size(); ++i) visit_conv("wtcr.hf" + std::to_string(i + 1), m.wtcr.hf[i], fn);
  visit_st("wtcr.rstn", m.wtcr.rstn, fn);
  visit_conv("fusion.up1", m.fusion.up1, fn);
  visit_conv("fusion.up2", m.fusion.up2, fn);
  visit_conv("fusion.down1", m.fusion.down1, fn);
  visit_conv("fusion.down2", m.fusion.down2, fn);
  visit_conv("fusion.head_conv", m.fusion.head_conv, fn);
  fn("fusion.fc.weight", m.fusion.fc.weight);
  fn("fusion.fc.bias", m.fusion.fc.bias);
}

Tensor vec_tensor(const std::vector<float>& v) { return Tensor({v.size()}, layout::generic(1), v); }

void bn_to_tensors(const std::string& name, const nam::BnParams& bn, std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(name + ".gamma", vec_tensor(bn.gamma));
  out.emplace_back(name + ".beta", vec_tensor(bn.beta));
  out.emplace_back(name + ".running_mean", vec_tensor(bn.running_mean));
  out.emplace_back(name + ".running_var", vec_tensor(bn.running_var));
}

std::vector<float> read_vec(const std::filesystem::path& dir, const json& entry, std::size_t n) {
  const Tensor t = load(dir / entry.at("file").get<std::string>());
  if (t.dims() != Dims{n}) throw std::invalid_argument("load_model: BN vector has wrong length");
  return {t.values().begin(), t.values().end()};
}

}  // namespace

void ModelParams::for_each_tensor(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_all(*this, fn);
}

void ModelParams::for_each_tensor(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  auto adapter = [&](const std::string& n, Tensor& t) { fn(n, t); };
  visit_all(const_cast<ModelParams&>(*this), adapter);
}

BranchFeatures branch_features(const Tensor& clip, const ModelParams& params,
                               const backbone::FrameFeatureProvider& provider,
                               std::span<const backbone::ClipKey> keys) {
  params.shape.check_input(clip, "forward");
  BranchFeatures f;
  f.spatiotemporal = backbone::backbone_forward(clip, params.backbone);
  f.attended = nam::nam_forward(provider.encode(clip, params.shape, keys), params.nam_bn, params.nam_cfg);
  f.frequency = wavelet::wtcr_forward(clip, params.wtcr);
  params.shape.check_branch(f.spatiotemporal, "spatiotemporal");
  params.shape.check_branch(f.attended, "attended");
  params.shape.check_branch(f.frequency, "frequency");
  return f;
}

Tensor forward(const Tensor& clip, const ModelParams& params, const backbone::FrameFeatureProvider& provider,
               std::span<const backbone::ClipKey> keys) {
  const BranchFeatures f = branch_features(clip, params, provider, keys);
  return classify(pyramid_fuse(f.spatiotemporal, f.attended, f.frequency, params.fusion), params.fusion);
}

void save_model(const ModelParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, Tensor>> tensors;
  params.for_each_tensor([&](const std::string& n, const Tensor& t) { tensors.emplace_back(n, t); });
  bn_to_tensors("nam_bn", params.nam_bn, tensors);
  bn_to_tensors("fusion.head_bn", params.fusion.head_bn, tensors);

  json manifest;
  manifest["format"] = "trinet-model";
  manifest["config"] = {{"in_channels", params.shape.in_channels}, {"height", params.shape.height},
                        {"width", params.shape.width},             {"frames", params.shape.frames},
                        {"channels", params.shape.channels},       {"groups", params.shape.groups},
                        {"levels", params.wtcr.levels},            {"nam_eps", params.nam_cfg.eps},
                        {"nam_bn_eps", params.nam_bn.eps},         {"head_bn_eps", params.fusion.head_bn.eps}};
  json list = json::array();
  for (const auto& [name, t] : tensors) {
    const std::string file = name + ".tnsr";
    save(t, dir / file);
    list.push_back({{"name", name}, {"file", file}, {"dims", t.dims()}});
  }
  manifest["tensors"] = std::move(list);
  std::ofstream os(dir / "model.json");
  if (!os) throw std::runtime_error("save_model: cannot write manifest in " + dir.string());
  os << manifest.dump(2) << '\n';
}

ModelParams load_model(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("load_model: cannot open " + manifest_path.string());
  const json manifest = json::parse(is);
  if (manifest.value("format", "") != "trinet-model")
    throw std::runtime_error("load_model: " + manifest_path.string() + " is not a model manifest");
  const auto& c = manifest.at("config");
  backbone::PipelineShape shape;
  shape.in_channels = c.at("in_channels");
  shape.height = c.at("height");
  shape.width = c.at("width");
  shape.frames = c.at("frames");
  shape.channels = c.at("channels");
  shape.groups = c.at("groups");
  InitOptions opts;
  opts.seed = 0;
  opts.levels = c.at("levels");
  opts.bias_range = 0.0f;
  ModelParams m = ModelParams::init(shape, opts);
  m.nam_cfg.eps = c.at("nam_eps");

  const auto dir = manifest_path.parent_path();
  std::map<std::string, const json*> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = &e;
  auto entry = [&](const std::string& name) -> const json& {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::runtime_error("load_model: manifest lacks tensor '" + name + "'");
    return *it->second;
  };
  m.for_each_tensor([&](const std::string& name, Tensor& t) {
    const auto path = dir / entry(name).at("file").get<std::string>();
    if (!std::filesystem::exists(path)) throw std::runtime_error("load_model: missing weight blob " + path.string());
    Tensor loaded = load(path);
    if (loaded.dims() != t.dims())
      throw std::invalid_argument("load_model: " + name + " has dims " + dims_to_string(loaded.dims()) +
                                  ", expected " + dims_to_string(t.dims()));
    t = loaded.with_roles(t.roles());
  });
  for (auto* bn : {&m.nam_bn, &m.fusion.head_bn}) {
    const std::string base = bn == &m.nam_bn ? "nam_bn" : "fusion.head_bn";
    const std::size_t n = bn->channels();
    bn->gamma = read_vec(dir, entry(base + ".gamma"), n);
    bn->beta = read_vec(dir, entry(base + ".beta"), n);
    bn->running_mean = read_vec(dir, entry(base + ".running_mean"), n);
    bn->running_var = read_vec(dir, entry(base + ".running_var"), n);
  }
  m.nam_bn.eps = c.at("nam_bn_eps");
  m.fusion.head_bn.eps = c.at("head_bn_eps");
  return m;
}

}  // namespace trinet::fusion
