#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "trinet/fusion_head.hpp"

using namespace trinet;
using namespace trinet::fusion;

namespace {

const backbone::PipelineShape kDesk;

Tensor branch(Rng& rng, std::size_t b = 1) {
  return seeded_uniform(kDesk.branch_dims(b), layout::bcthw, -1.0f, 1.0f, rng);
}

// Independent 1x1x1 projection: plain matrix product over channels.
Tensor project_oracle(const Tensor& x, const nn::ConvParams& p) {
  const std::size_t b = x.dim(0), ci = x.dim(1), co = p.weight.dim(0);
  const std::size_t plane = x.size() / (b * ci);
  Tensor y = Tensor::zeros({b, co, x.dim(2), x.dim(3), x.dim(4)}, layout::bcthw);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t s = 0; s < plane; ++s) {
        double acc = p.bias[o];
        for (std::size_t i = 0; i < ci; ++i) acc += double(p.weight[o * ci + i]) * x[(n * ci + i) * plane + s];
        y[(n * co + o) * plane + s] = static_cast<float>(acc);
      }
  return y;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "trinet_test_fusion" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("channel projection") {
  Rng rng(1);
  const Tensor x = branch(rng);
  CHECK(channel_project(x, nn::identity_pointwise(16)).bitwise_equal(x));

  const auto up = nn::init_pointwise(rng, 16, 32, 0.1f);
  const Tensor y = channel_project(x, up);
  CHECK(y.dims() == Dims{1, 32, 8, 8, 8});
  CHECK(max_abs_diff(y, project_oracle(x, up)) <= 1e-5);

  nn::ConvParams zero = up;
  zero.weight = Tensor::zeros(up.weight.dims(), up.weight.roles());
  zero.bias = Tensor::zeros(up.bias.dims(), up.bias.roles());
  const Tensor projected = channel_project(x, zero);
  for (float v : projected.values()) CHECK(v == 0.0f);
}

TEST_CASE("pyramid fusion wiring matches a hand-assembled oracle") {
  Rng rng(2);
  const auto p = FusionParams::init(rng, 16, 0.05f);
  const Tensor spatiotemporal = branch(rng), attended = branch(rng), frequency = branch(rng);
  const auto tr = pyramid_fuse_trace(spatiotemporal, attended, frequency, p);

  const std::array<Tensor, 2> pair{spatiotemporal, attended};
  const std::array<Tensor, 3> triple{spatiotemporal, attended, frequency};
  const Tensor paired = concat(pair, 1);
  const Tensor a = add(paired, project_oracle(spatiotemporal, p.up1));
  const Tensor b = add(project_oracle(a, p.up2), concat(triple, 1));
  const Tensor e1 = add(project_oracle(b, p.down1), paired);
  const Tensor e2 = add(project_oracle(e1, p.down2), spatiotemporal);

  CHECK(tr.lifted.dims() == Dims{1, 32, 8, 8, 8});
  CHECK(tr.merged.dims() == Dims{1, 48, 8, 8, 8});
  CHECK(tr.refined.dims() == Dims{1, 32, 8, 8, 8});
  CHECK(tr.fused.dims() == spatiotemporal.dims());
  CHECK(max_abs_diff(tr.fused, e2) <= 1e-4);
}

TEST_CASE("pyramid fusion is linear without biases") {
  Rng rng(3);
  const auto p = FusionParams::init(rng, 16, 0.0f);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor spatiotemporal = branch(rng, 2), attended = branch(rng, 2), frequency = branch(rng, 2);
    const float a = static_cast<float>(rng.uniform(-2.0, 2.0));
    const Tensor lhs = pyramid_fuse(scale(spatiotemporal, a), scale(attended, a), scale(frequency, a), p);
    const Tensor rhs = scale(pyramid_fuse(spatiotemporal, attended, frequency, p), a);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-5);
  }
  const Tensor z = Tensor::zeros(kDesk.branch_dims(1), layout::bcthw);
  const Tensor fused = pyramid_fuse(z, z, z, p);
  for (float v : fused.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(pyramid_fuse(z, z, Tensor::zeros({1, 16, 8, 4, 4}, layout::bcthw), p), std::invalid_argument);
}

TEST_CASE("with silent attended and frequency branches the output depends on the spatiotemporal one only") {
  Rng rng(4);
  const auto p = FusionParams::init(rng, 16, 0.05f);
  const Tensor spatiotemporal = branch(rng);
  const Tensor z = Tensor::zeros(kDesk.branch_dims(1), layout::bcthw);
  const Tensor tiny = scale(branch(rng), 0.0f);  // signed zeros from noise
  CHECK(max_abs_diff(pyramid_fuse(spatiotemporal, z, z, p), pyramid_fuse(spatiotemporal, tiny, tiny, p)) == 0.0);
}

TEST_CASE("classification head") {
  Rng rng(5);
  const auto p = FusionParams::init(rng, 16, 0.05f);
  const Tensor x = branch(rng);
  const Tensor logits = classify(x, p);
  CHECK(logits.dims() == Dims{1, 2});

  SUBCASE("duplicating a clip duplicates its row") {
    const std::array<Tensor, 2> twice{x, x};
    const Tensor l2 = classify(concat(twice, 0), p);
    CHECK(l2.dims() == Dims{2, 2});
    CHECK(l2[0] == logits[0]);
    CHECK(l2[1] == logits[1]);
    CHECK(l2[2] == logits[0]);
    CHECK(l2[3] == logits[1]);
  }

  SUBCASE("spatial permutation invariance") {
    Tensor flipped = x;
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t i = 0; i < 8; ++i)
          for (std::size_t j = 0; j < 8; ++j) flipped.at({0, c, t, i, j}) = x.at({0, c, t, 7 - j, i});
    const Tensor lf = classify(flipped, p);
    CHECK(lf[0] == doctest::Approx(logits[0]).epsilon(1e-5));
    CHECK(lf[1] == doctest::Approx(logits[1]).epsilon(1e-5));
  }
}

TEST_CASE("malignant probability is the softmax of column 1") {
  const Tensor logits({3, 2}, layout::generic(2), {0.0f, 0.0f, 1.0f, 3.0f, 800.0f, -800.0f});
  const auto p = malignant_probability(logits);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(3.0))));
  CHECK(p[2] == 0.0);
}

TEST_CASE("end-to-end forward") {
  const auto model = ModelParams::init(kDesk, InitOptions{});
  const auto provider = backbone::FrameFeatureProvider::stub(model.encoder);
  Rng data(7);
  const Tensor clip = seeded_uniform(kDesk.input_dims(2), layout::bcthw, -1.0f, 1.0f, data);
  const Tensor a = forward(clip, model, provider);
  CHECK(a.dims() == Dims{2, 2});
  const auto again = ModelParams::init(kDesk, InitOptions{});
  CHECK(a.bitwise_equal(forward(clip, again, backbone::FrameFeatureProvider::stub(again.encoder))));

  SUBCASE("48x48 input") {
    backbone::PipelineShape small = kDesk;
    small.height = small.width = 48;
    const auto m = ModelParams::init(small, InitOptions{});
    Rng r(1);
    const Tensor c = seeded_uniform(small.input_dims(1), layout::bcthw, -1.0f, 1.0f, r);
    CHECK(forward(c, m, backbone::FrameFeatureProvider::stub(m.encoder)).dims() == Dims{1, 2});
    CHECK(branch_features(c, m, backbone::FrameFeatureProvider::stub(m.encoder)).frequency.dims() ==
          Dims{1, 16, 8, 6, 6});
  }

  SUBCASE("indivisible height") {
    backbone::PipelineShape bad = kDesk;
    bad.height = 50;
    CHECK_THROWS(ModelParams::init(bad, InitOptions{}));
    CHECK_THROWS(forward(Tensor::zeros({1, 1, 8, 50, 64}, layout::bcthw), model, provider));
  }
}

TEST_CASE("model save and load") {
  const auto dir = temp_dir("model");
  const auto model = ModelParams::init(kDesk, InitOptions{});
  save_model(model, dir);
  const auto back = load_model(dir / "model.json");

  std::size_t count = 0;
  std::map<std::string, Tensor> saved;
  model.for_each_tensor([&](const std::string& name, const Tensor& t) { saved.emplace(name, t); });
  back.for_each_tensor([&](const std::string& name, const Tensor& t) {
    REQUIRE(saved.count(name) == 1);
    CHECK(t.bitwise_equal(saved.at(name)));
    ++count;
  });
  CHECK(count == saved.size());

  Rng data(1);
  const Tensor clip = seeded_uniform(kDesk.input_dims(1), layout::bcthw, -1.0f, 1.0f, data);
  CHECK(forward(clip, model, backbone::FrameFeatureProvider::stub(model.encoder))
            .bitwise_equal(forward(clip, back, backbone::FrameFeatureProvider::stub(back.encoder))));

  std::filesystem::remove(dir / "fusion.fc.weight.tnsr");
  CHECK_THROWS_AS(load_model(dir / "model.json"), std::runtime_error);
}
