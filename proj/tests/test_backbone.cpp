#include <doctest.h>

#include <array>
#include <filesystem>

#include "trinet/backbone.hpp"

using namespace trinet;
using namespace trinet::backbone;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "trinet_test_backbone" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("res2d shape and zero propagation") {
  const PipelineShape shape;
  Rng rng(1);
  const auto p = SpatioTemporalParams::init(rng, shape, 0.0f);
  const Tensor zeros = Tensor::zeros({3, 1, 64, 64}, layout::nchw);
  const Tensor out = res2d_forward(zeros, p.spatial);
  CHECK(out.dims() == Dims{3, 16, 8, 8});
  for (float v : out.values()) CHECK(v == 0.0f);

  CHECK_THROWS_AS(res2d_forward(Tensor::zeros({1, 1, 50, 50}, layout::nchw), p.spatial), std::invalid_argument);
}

TEST_CASE("temporal stage") {
  SUBCASE("single frame mixes only the centre tap within each group") {
    const Tensor x({1, 2, 1, 1, 1}, layout::bcthw, {2.0f, -3.0f});
    nn::ConvParams p;
    // Two channels, one group: weights (2, 2, 3).
    p.weight = Tensor({2, 2, 3}, layout::generic(3), {9, 1, 9, 9, 2, 9, 9, 3, 9, 9, 4, 9});
    p.bias = Tensor::zeros({2}, layout::generic(1));
    p.pad = 1;
    const Tensor y = temporal_forward(x, p);
    CHECK(y[0] == doctest::Approx(std::max(0.0, 1 * 2.0 + 2 * -3.0)));
    CHECK(y[1] == doctest::Approx(std::max(0.0, 3 * 2.0 + 4 * -3.0)));
  }

  SUBCASE("constant input with identity temporal weights stays constant") {
    const Tensor x = Tensor::full({1, 4, 3, 4, 4}, layout::bcthw, 0.5f);
    nn::ConvParams p;
    std::vector<float> w(4 * 1 * 3, 0.0f);
    for (std::size_t c = 0; c < 4; ++c) w[c * 3 + 1] = 1.0f;
    p.weight = Tensor({4, 1, 3}, layout::generic(3), w);
    p.bias = Tensor::zeros({4}, layout::generic(1));
    p.pad = 1;
    p.groups = 4;
    const Tensor y = temporal_forward(x, p);
    CHECK(y.dims() == x.dims());
    for (float v : y.values()) CHECK(v == 0.5f);
  }
}

TEST_CASE("backbone forward") {
  const PipelineShape shape;
  Rng data(2);
  const Tensor clip = seeded_uniform(shape.input_dims(2), layout::bcthw, -1.0f, 1.0f, data);

  Rng r1(5), r2(5);
  const auto p1 = SpatioTemporalParams::init(r1, shape, 0.05f);
  const auto p2 = SpatioTemporalParams::init(r2, shape, 0.05f);
  const Tensor out = backbone_forward(clip, p1);
  CHECK(out.dims() == Dims{2, 16, 8, 8, 8});
  CHECK(out.bitwise_equal(backbone_forward(clip, p2)));

  SUBCASE("batch equivariance") {
    const std::array<Tensor, 2> swapped{slice(clip, 0, 1, 1), slice(clip, 0, 0, 1)};
    const Tensor g = backbone_forward(concat(swapped, 0), p1);
    CHECK(slice(g, 0, 0, 1).bitwise_equal(slice(out, 0, 1, 1)));
    CHECK(slice(g, 0, 1, 1).bitwise_equal(slice(out, 0, 0, 1)));
  }

  SUBCASE("zero clip, zero biases") {
    Rng r(5);
    const auto unbiased = SpatioTemporalParams::init(r, shape, 0.0f);
    const Tensor z = backbone_forward(Tensor::zeros(shape.input_dims(1), layout::bcthw), unbiased);
    for (float v : z.values()) CHECK(v == 0.0f);
  }

  CHECK_THROWS(backbone_forward(Tensor::zeros({1, 1, 8, 50, 50}, layout::bcthw), p1));
}

TEST_CASE("stub provider") {
  const PipelineShape shape;
  Rng data(3);
  const Tensor clip = seeded_uniform(shape.input_dims(1), layout::bcthw, -1.0f, 1.0f, data);
  Rng r1(9), r2(9);
  const auto a = FrameFeatureProvider::stub(StubEncoderParams::init(r1, shape, 0.05f));
  const auto b = FrameFeatureProvider::stub(StubEncoderParams::init(r2, shape, 0.05f));
  const Tensor fa = a.encode(clip, shape);
  CHECK(fa.dims() == shape.branch_dims(1));
  CHECK(fa.bitwise_equal(b.encode(clip, shape)));
}

TEST_CASE("file provider") {
  const PipelineShape shape;
  const auto dir = temp_dir("embeddings");
  Rng rng(4);
  const Tensor stored = seeded_uniform(shape.branch_dims(1), layout::bcthw, -1.0f, 1.0f, rng);
  save(stored, dir / embedding_file_name({"vid7", 2}));
  CHECK(embedding_file_name({"vid7", 2}) == "vid7_2.tnsr");

  const auto provider = FrameFeatureProvider::from_directory(dir);
  const Tensor clip = Tensor::zeros(shape.input_dims(1), layout::bcthw);
  const std::array<ClipKey, 1> keys{ClipKey{"vid7", 2}};
  CHECK(provider.encode(clip, shape, keys).bitwise_equal(stored));

  // Wrong T.
  const Tensor bad = Tensor::zeros({1, 16, 4, 8, 8}, layout::bcthw);
  save(bad, dir / embedding_file_name({"vid8", 0}));
  const std::array<ClipKey, 1> bad_keys{ClipKey{"vid8", 0}};
  CHECK_THROWS_AS(provider.encode(clip, shape, bad_keys), std::invalid_argument);

  const std::array<ClipKey, 1> missing{ClipKey{"nope", 0}};
  CHECK_THROWS_AS(provider.encode(clip, shape, missing), std::runtime_error);
  CHECK_THROWS_AS(provider.encode(clip, shape), std::invalid_argument);
}
