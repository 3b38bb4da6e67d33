// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances are pinned here and never relaxed at runtime.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trinet/evalkit.hpp"
#include "trinet/experiment.hpp"
#include "trinet/fusion_head.hpp"
#include "trinet/hfs_sampler.hpp"
#include "trinet/nam_attention.hpp"
#include "trinet/probe.hpp"
#include "trinet/synthgen.hpp"
#include "trinet/wavelet.hpp"

namespace fs = std::filesystem;
using namespace trinet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && out_.pass) out_.detail = what;
    out_.pass = out_.pass && ok;
  }
  void note(const std::string& s) {
    if (out_.pass) out_.detail += (out_.detail.empty() ? "" : "; ") + s;
  }
  Outcome result() const { return out_; }

 private:
  Outcome out_;
};

std::string num(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Fixture {
  Tensor x;
  std::size_t levels;
};

// 100 fixtures cycling over C in {1,3}, H=W in {16,32,64}, M in {1,2,3}.
std::vector<Fixture> wavelet_fixtures() {
  Rng rng(derive_seed(2024, seed_domain::wavelet));
  std::vector<Fixture> out;
  const std::size_t cs[] = {1, 3}, hs[] = {16, 32, 64}, ms[] = {1, 2, 3};
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t c = cs[i % 2], h = hs[(i / 2) % 3], m = ms[(i / 6) % 3];
    out.push_back({seeded_uniform({c, h, h}, layout::chw, -1.0f, 1.0f, rng), m});
  }
  return out;
}

Outcome criterion_1() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& f : wavelet_fixtures()) {
    const auto pyramid = wavelet::multilevel_decompose(f.x, f.levels);
    Tensor up = pyramid.top_ll;
    for (std::size_t level = pyramid.depth(); level-- > 0;) {
      const auto& d = pyramid.levels[level];
      up = wavelet::haar_reconstruct(up, d.lh, d.hl, d.hh);
    }
    worst = std::max<double>(worst, max_abs_diff(up, f.x));
  }
  const double secs = seconds_since(t0);
  c.require(worst <= 1e-5, "max reconstruction error " + num(worst));
  c.require(secs < 5.0, "runtime " + num(secs) + " s");
  c.note("max error " + num(worst) + ", " + num(secs, 3) + " s");
  return c.result();
}

Outcome criterion_2() {
  Check c;
  double worst = 0.0;
  for (const auto& f : wavelet_fixtures()) {
    const auto b = wavelet::haar_decompose(f.x);
    const double e = sum_of_squares(b.ll) + sum_of_squares(b.lh) + sum_of_squares(b.hl) + sum_of_squares(b.hh);
    const double ex = sum_of_squares(f.x);
    worst = std::max(worst, std::abs(e - ex) / ex);
  }
  c.require(worst <= 1e-5, "energy relative error " + num(worst));

  const auto hand = wavelet::haar_decompose(Tensor({1, 2, 2}, layout::chw, {1, 2, 3, 4}));
  const bool coeffs = hand.ll[0] == 5.0f && hand.lh[0] == -1.0f && hand.hl[0] == -2.0f && hand.hh[0] == 0.0f;
  c.require(coeffs, "hand case coefficients differ from (5,-1,-2,0)");
  const double hand_energy = sum_of_squares(hand.ll) + sum_of_squares(hand.lh) + sum_of_squares(hand.hl) +
                             sum_of_squares(hand.hh);
  c.require(hand_energy == 30.0, "hand case energy " + num(hand_energy));
  c.note("max energy error " + num(worst) + ", hand case exact");
  return c.result();
}

Outcome criterion_3() {
  Check c;
  Rng rng(derive_seed(2025, seed_domain::wavelet));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t ch = i % 2 ? 3 : 1, h = 8u << (i % 3);
    const Tensor x = seeded_uniform({ch, h, h}, layout::chw, -1.0f, 1.0f, rng);
    std::array<Tensor, 4> y;
    for (auto& t : y) t = seeded_uniform({ch, h / 2, h / 2}, layout::chw, -1.0f, 1.0f, rng);
    const auto b = wavelet::haar_decompose(x);
    const double lhs = dot(b.ll, y[0]) + dot(b.lh, y[1]) + dot(b.hl, y[2]) + dot(b.hh, y[3]);
    const double rhs = dot(x, wavelet::haar_reconstruct(y[0], y[1], y[2], y[3]));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  c.require(worst <= 1e-5, "adjoint gap " + num(worst));
  c.note("max adjoint gap " + num(worst));
  return c.result();
}

Outcome criterion_4() {
  Check c;
  const hfs::SamplerConfig cfg{4, 8, 8};
  Rng rng(derive_seed(4, seed_domain::sampler));
  for (int i = 0; i < 10000 && c.result().pass; ++i) {
    const auto s = hfs::plan_starts(200, cfg, rng);
    for (std::size_t k = 0; k < 4; ++k) {
      c.require(s[k] >= k * 36 && s[k] < (k + 1) * 36, "start outside its stratum");
      if (k > 0) c.require(s[k] > s[k - 1], "starts not strictly increasing");
      const auto f = hfs::clip_frames(s[k], cfg, 200);
      c.require(std::is_sorted(f.begin(), f.end()) && std::adjacent_find(f.begin(), f.end()) == f.end(),
                "long-video clip wraps");
    }
  }
  for (int i = 0; i < 10000 && c.result().pass; ++i) {
    const std::size_t len = 56 + static_cast<std::size_t>(i % 4);  // every medium length
    const std::size_t prefix = len - 56;
    const auto s = hfs::plan_starts(len, cfg, rng);
    for (std::size_t k = 0; k < 4; ++k) {
      if (k < prefix) {
        c.require(s[k] == k, "medium prefix start " + std::to_string(s[k]) + " at slot " + std::to_string(k));
      } else {
        c.require(s[k] >= prefix && s[k] < len, "medium tail start out of range");
      }
    }
  }
  for (int i = 0; i < 10000 && c.result().pass; ++i) {
    const auto s = hfs::plan_starts(10, {3, 8, 8}, rng);
    for (auto v : s) c.require(v <= 9, "short start out of range");
    for (auto v : s) {
      const auto f = hfs::clip_frames(v, {3, 8, 8}, 10);
      for (auto x : f) c.require(x < 10, "short frame out of range");
    }
  }
  c.note("3 x 10000 draws");
  return c.result();
}

Outcome criterion_5() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  synth::CoverageSpec spec;  // 2000 videos, L in [150,250], width in [60,120], N=4, T=8, t=8, seed 42, 20 reps
  const auto r = synth::run_coverage_experiment(spec);
  const double secs = seconds_since(t0);
  c.require(r.repetitions == 20, "repetition count");
  c.require(r.heuristic_wins >= 18, "heuristic lower in only " + std::to_string(r.heuristic_wins) + " of 20");
  c.require(r.heuristic.rich_mean() > r.random.rich_mean(), "rich fraction not higher for heuristic");
  c.require(secs < 30.0, "runtime " + num(secs) + " s");
  c.note("background " + num(r.heuristic.background_mean(), 4) + " vs " + num(r.random.background_mean(), 4) +
         ", wins " + std::to_string(r.heuristic_wins) + "/20, rich " + num(r.heuristic.rich_mean(), 4) + " vs " +
         num(r.random.rich_mean(), 4) + ", " + num(secs, 3) + " s");
  return c.result();
}

Outcome criterion_6() {
  Check c;
  Rng rng(derive_seed(6, seed_domain::fusion));
  const auto bn = nam::BnParams::identity(16);
  const nam::NamConfig cfg{16, 1e-5f};
  for (int i = 0; i < 100 && c.result().pass; ++i) {
    const Tensor f = seeded_uniform({1, 16, 2, 4, 4}, layout::bcthw, -4.0f, 4.0f, rng);
    const Tensor gated = nam::nam_global(f, bn);
    const Tensor out = nam::nam_forward(f, bn, cfg);
    for (std::size_t k = 0; k < f.size(); ++k) {
      c.require(std::abs(gated[k]) <= std::abs(f[k]), "|gated| > |input|");
      c.require(std::abs(out[k]) <= std::abs(gated[k]), "|output| > |gated|");
      if (f[k] != 0.0f) c.require(std::signbit(out[k]) == std::signbit(f[k]), "sign flipped");
    }
  }
  const Tensor two = Tensor::full({1, 16, 1, 1, 1}, layout::bcthw, 2.0f);
  const double chain = nam::nam_forward(two, bn, cfg)[0];
  c.require(std::abs(chain - 1.28783) <= 1e-4, "scalar chain " + num(chain));
  c.note("scalar chain " + num(chain));
  return c.result();
}

Tensor read_file_bytes_as_tensor(const fs::path& p) { return load(p); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TRINET_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_7() {
  Check c;
  const backbone::PipelineShape shape;
  fusion::InitOptions opts;
  opts.seed = 7;

  // In-process: two independent initialisations on the same (2,1,8,64,64) input.
  Rng data(derive_seed(7, seed_domain::synth));
  const Tensor clip = seeded_uniform(shape.input_dims(2), layout::bcthw, -1.0f, 1.0f, data);
  const auto m1 = fusion::ModelParams::init(shape, opts);
  const auto m2 = fusion::ModelParams::init(shape, opts);
  const Tensor a = fusion::forward(clip, m1, backbone::FrameFeatureProvider::stub(m1.encoder));
  const Tensor b = fusion::forward(clip, m2, backbone::FrameFeatureProvider::stub(m2.encoder));
  c.require(a.dims() == Dims({2, 2}), "logit shape " + dims_to_string(a.dims()));
  c.require(a.bitwise_equal(b), "in-process runs differ");

  // Separate processes.
  const fs::path dir = fs::temp_directory_path() / "trinet_acceptance_forward";
  fs::remove_all(dir);
  c.require(run_cli("gen-data --dir " + (dir / "data").string() + " --videos-per-class 1 --annotation-videos 0") == 0,
            "gen-data failed");
  const std::string base = "forward --seed 7 --batch 2 --dataset " + (dir / "data" / "dataset.json").string();
  c.require(run_cli(base + " --predictions " + (dir / "p1.jsonl").string() + " --logits " +
                    (dir / "l1.tnsr").string()) == 0,
            "first forward run failed");
  c.require(run_cli(base + " --predictions " + (dir / "p2.jsonl").string() + " --logits " +
                    (dir / "l2.tnsr").string()) == 0,
            "second forward run failed");
  if (c.result().pass) {
    c.require(slurp(dir / "l1.tnsr") == slurp(dir / "l2.tnsr"), "logit files differ across processes");
    c.require(slurp(dir / "p1.jsonl") == slurp(dir / "p2.jsonl"), "prediction files differ across processes");
    const Tensor from_cli = read_file_bytes_as_tensor(dir / "l1.tnsr");
    c.require(from_cli.dims() == Dims({2, 2}), "CLI logit shape " + dims_to_string(from_cli.dims()));

    // The CLI result must match this process on the same clips.
    const auto entries = synth::read_dataset_manifest(dir / "data" / "dataset.json");
    std::vector<Tensor> clips;
    for (const auto& e : entries) clips.push_back(load(dir / "data" / e.file));
    const Tensor here = fusion::forward(concat(clips, 0), m1, backbone::FrameFeatureProvider::stub(m1.encoder));
    c.require(here.reshaped({2, 2}, layout::generic(2)).bitwise_equal(from_cli), "CLI and library logits differ");
  }
  c.note("(2,2) logits bitwise equal in-process and across processes");
  return c.result();
}

Outcome criterion_8() {
  Check c;
  Rng rng(derive_seed(8, seed_domain::fusion));
  const auto p = fusion::FusionParams::init(rng, 16, 0.0f);
  const backbone::PipelineShape shape;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Tensor spatiotemporal = seeded_uniform(shape.branch_dims(2), layout::bcthw, -1.0f, 1.0f, rng);
    const Tensor attended = seeded_uniform(shape.branch_dims(2), layout::bcthw, -1.0f, 1.0f, rng);
    const Tensor frequency = seeded_uniform(shape.branch_dims(2), layout::bcthw, -1.0f, 1.0f, rng);
    const Tensor lhs = fusion::pyramid_fuse(scale(spatiotemporal, 2.0f), scale(attended, 2.0f), scale(frequency, 2.0f), p);
    const Tensor rhs = scale(fusion::pyramid_fuse(spatiotemporal, attended, frequency, p), 2.0f);
    worst = std::max<double>(worst, max_abs_diff(lhs, rhs));
  }
  c.require(worst <= 1e-5, "linearity gap " + num(worst));
  c.note("max gap " + num(worst));
  return c.result();
}

Outcome criterion_9() {
  Check c;
  Rng rng(derive_seed(9, seed_domain::eval));
  for (int i = 0; i < 50; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 200));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = std::floor(rng.next_double() * 20) / 20;  // ties on purpose
      y[k] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    double wins = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t a = 0; a < n; ++a) (y[a] ? np : nn)++;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (y[a] == 1 && y[b] == 0) wins += s[a] > s[b] ? 1.0 : s[a] == s[b] ? 0.5 : 0.0;
    const double brute = wins / (static_cast<double>(np) * static_cast<double>(nn));
    c.require(eval::rank_auc(s, y) == brute, "AUC differs from pair counting on instance " + std::to_string(i));
  }

  std::vector<eval::Prediction> hand;
  const int labels[] = {1, 0, 0, 1};
  const double scores[] = {0.9, 0.8, 0.2, 0.1};  // hard predictions 1,1,0,0
  for (int i = 0; i < 4; ++i) hand.push_back({"v" + std::to_string(i), "p" + std::to_string(i), labels[i], scores[i]});
  const auto m = eval::compute_metrics(hand);
  for (auto metric : {eval::Metric::acc, eval::Metric::precision, eval::Metric::sensitivity,
                      eval::Metric::specificity, eval::Metric::f1})
    c.require(m.get(metric) == 0.5, std::string(eval::metric_name(metric)) + " = " + num(m.get(metric)));

  std::vector<eval::Prediction> fifty;
  for (std::size_t i = 0; i < 100; ++i) {
    const int label = static_cast<int>(i % 2);
    const bool correct = (i / 2) % 2 == 0;
    fifty.push_back({"v" + std::to_string(i), "p" + std::to_string(i), label, (label == 1) == correct ? 0.9 : 0.1});
  }
  Rng boot(derive_seed(9, seed_domain::eval));
  const auto r = eval::bootstrap_ci(fifty, 1000, 0.95, boot);
  const auto& acc = r.get(eval::Metric::acc);
  c.require(acc.lower <= 0.5 && acc.upper >= 0.5, "interval does not bracket 0.5");
  c.require(acc.half_width >= 0.05 && acc.half_width <= 0.15, "half-width " + num(acc.half_width));
  c.note("50 AUC instances exact; hand fixture 0.5; bootstrap half-width " + num(acc.half_width, 4));
  return c.result();
}

Outcome criterion_10() {
  Check c;
  Rng rng(derive_seed(10, seed_domain::probe));
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(5, 30));
    const std::size_t d = 5;
    probe::Features x{n, d, std::vector<double>(n * d)};
    for (auto& v : x.data) v = rng.uniform(-2.0, 2.0);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    probe::ProbeParams p;
    p.weights.resize(d);
    for (auto& w : p.weights) w = rng.uniform(-1.0, 1.0);
    p.bias = rng.uniform(-0.5, 0.5);
    p.options.l2 = 1e-2;
    const auto g = probe::gradient(p, x, y);
    const double h = 1e-3;
    // Five-point central stencil: truncation error O(h^4), so components near
    // zero are not swamped by the step.
    auto central = [&](double& slot) {
      const double keep = slot;
      auto at = [&](double off) {
        slot = keep + off;
        return probe::loss(p, x, y);
      };
      const double d = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      slot = keep;
      return d;
    };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b))); };
    for (std::size_t k = 0; k < d; ++k) worst = std::max(worst, rel(central(p.weights[k]), g.weights[k]));
    worst = std::max(worst, rel(central(p.bias), g.bias));
  }
  c.require(worst <= 1e-4, "relative gradient error " + num(worst));
  c.note("max relative error " + num(worst));
  return c.result();
}

Outcome criterion_11() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  synth::TextureSpec spec;  // 200 videos per class, seed 42, default speckle amplitude
  const auto model = fusion::ModelParams::init(backbone::PipelineShape{}, fusion::InitOptions{});
  const auto r = experiment::separability(spec, model, experiment::FeatureSource::wtcr, probe::TrainOptions{}, 42);
  const double secs = seconds_since(t0);
  const double real = r.real.test.balanced_accuracy();
  const double shuffled = r.shuffled.test.balanced_accuracy();
  c.require(real >= 0.85, "balanced accuracy " + num(real));
  c.require(shuffled >= 0.35 && shuffled <= 0.65, "shuffled control " + num(shuffled));
  c.require(secs < 120.0, "runtime " + num(secs) + " s");
  c.note("balanced accuracy " + num(real, 4) + ", shuffled " + num(shuffled, 4) + ", speckle " +
         num(spec.speckle_amplitude, 3) + ", " + num(secs, 3) + " s");
  return c.result();
}

Outcome criterion_12() {
  Check c;
  Rng rng(derive_seed(12, seed_domain::eval));
  for (int trial = 0; trial < 200 && c.result().pass; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(5, 120));
    std::vector<eval::PatientLabel> pats;
    std::map<std::string, int> label;
    for (std::size_t i = 0; i < n; ++i) {
      pats.push_back({"pt" + std::to_string(i), static_cast<int>(rng.below(4) == 0)});
      label[pats.back().patient_id] = pats.back().label;
    }
    const auto f = eval::kfold_split(pats, 5, rng);
    std::set<std::string> seen;
    std::size_t lo = n, hi = 0;
    std::array<std::size_t, 2> clo{n, n}, chi{0, 0};
    for (const auto& fold : f.folds) {
      lo = std::min(lo, fold.size());
      hi = std::max(hi, fold.size());
      std::array<std::size_t, 2> cnt{};
      for (const auto& p : fold) {
        c.require(seen.insert(p).second, "patient in two folds");
        ++cnt[static_cast<std::size_t>(label.at(p))];
      }
      for (std::size_t k = 0; k < 2; ++k) {
        clo[k] = std::min(clo[k], cnt[k]);
        chi[k] = std::max(chi[k], cnt[k]);
      }
    }
    c.require(seen.size() == n, "folds do not cover every patient");
    c.require(hi - lo <= 1, "fold sizes differ by more than 1");
    c.require(chi[0] - clo[0] <= 1 && chi[1] - clo[1] <= 1, "class counts differ by more than 1 across folds");

    std::vector<int> y(static_cast<std::size_t>(rng.uniform_int(2, 80)));
    for (auto& v : y) v = static_cast<int>(rng.below(3) == 0);
    y[0] = 0;
    y[1] = 1;
    const auto idx = eval::balanced_pairs(y, rng);
    std::size_t pos = 0;
    for (auto i : idx) pos += y[i] == 1;
    c.require(2 * pos == idx.size(), "balanced_pairs not 1:1");
  }
  c.note("200 random cohorts");
  return c.result();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"haar perfect reconstruction", criterion_1},
      {"haar orthonormality", criterion_2},
      {"haar adjoint identity", criterion_3},
      {"sampler stratification and case invariants", criterion_4},
      {"coverage direction", criterion_5},
      {"attention contraction", criterion_6},
      {"end-to-end determinism and shape", criterion_7},
      {"fusion linearity", criterion_8},
      {"metrics oracle", criterion_9},
      {"probe gradient check", criterion_10},
      {"frequency-signal separability", criterion_11},
      {"protocol plumbing", criterion_12},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
