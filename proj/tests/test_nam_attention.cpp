#include <doctest.h>

#include <cmath>

#include "trinet/nam_attention.hpp"
#include "trinet/rng.hpp"

using namespace trinet;
using namespace trinet::nam;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("batch norm") {
  Rng rng(1);
  const Tensor f = seeded_uniform({2, 3, 2, 2, 2}, layout::bcthw, -2.0f, 2.0f, rng);
  CHECK(max_abs_diff(batch_norm(f, BnParams::identity(3)), f) <= 1e-4);

  SUBCASE("constant channels under batch statistics give beta") {
    Tensor c = Tensor::zeros({2, 2, 2, 2, 2}, layout::bcthw);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = (i / 8) % 2 ? 4.0f : -1.0f;
    auto p = BnParams::identity(2);
    p.beta = {0.25f, -0.75f};
    const Tensor y = batch_norm(c, p, BnMode::batch_stats);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx((i / 8) % 2 ? -0.75 : 0.25));
  }

  SUBCASE("affine arithmetic") {
    auto p = BnParams::identity(1);
    p.gamma = {2.0f};
    p.beta = {1.0f};
    const Tensor y = batch_norm(Tensor::zeros({1, 1, 2, 2}, layout::nchw), p);
    for (float v : y.values()) CHECK(v == doctest::Approx(1.0));
  }

  SUBCASE("batch statistics pool over every non-channel axis") {
    const Tensor y = batch_norm(f, BnParams::identity(3), BnMode::batch_stats);
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0, ss = 0.0;
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 2; ++t)
          for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
              const double v = y.at({b, c, t, i, j});
              s += v;
              ss += v * v;
            }
      CHECK(s / 16 == doctest::Approx(0.0).epsilon(1e-5));
      CHECK(ss / 16 == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  CHECK_THROWS_AS(batch_norm(f, BnParams::identity(2)), std::invalid_argument);
}

TEST_CASE("global gate scalar cases") {
  const auto p = BnParams::identity(1);
  auto run = [&](float v) { return nam_global(Tensor::full({1, 1, 1, 1, 1}, layout::bcthw, v), p)[0]; };
  CHECK(run(0.0f) == 0.0f);
  CHECK(run(2.0f) == doctest::Approx(1.761594).epsilon(1e-5));
  CHECK(run(-3.0f) == doctest::Approx(-0.142278).epsilon(1e-4));
}

TEST_CASE("pixel norm") {
  const NamConfig cfg{2, 1e-12f};
  const Tensor x({1, 2, 1, 1, 1}, layout::bcthw, {3.0f, 4.0f});
  const Tensor y = pixel_norm(x, cfg);
  CHECK(y[0] == doctest::Approx(3.0 / std::sqrt(12.5)));
  CHECK(y[1] == doctest::Approx(4.0 / std::sqrt(12.5)));

  const Tensor same = pixel_norm(Tensor::full({1, 2, 1, 2, 2}, layout::bcthw, 0.7f), cfg);
  for (float v : same.values()) CHECK(v == doctest::Approx(1.0));

  const Tensor zero = pixel_norm(Tensor::zeros({1, 2, 1, 2, 2}, layout::bcthw), NamConfig{2, 1e-5f});
  for (float v : zero.values()) CHECK(v == 0.0f);
}

TEST_CASE("pixel norm keeps channel mean square at most one") {
  Rng rng(2);
  const Tensor x = seeded_uniform({2, 16, 2, 3, 3}, layout::bcthw, -3.0f, 3.0f, rng);
  const Tensor y = pixel_norm(x, NamConfig{});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double ms = 0.0;
          for (std::size_t c = 0; c < 16; ++c) ms += std::pow(y.at({b, c, t, i, j}), 2);
          CHECK(ms / 16 <= 1.0 + 1e-6);
        }
}

TEST_CASE("full chain scalar oracle") {
  // channel gate = 2 sigmoid(2); pixel norm of a constant is ~1; gate sigmoid(1).
  const double gated = 2.0 * logistic(2.0);
  const double normed = gated / std::sqrt(gated * gated + 1e-5);
  const double expect = logistic(normed) * gated;
  CHECK(expect == doctest::Approx(1.28783).epsilon(1e-4));

  const Tensor f = Tensor::full({1, 16, 2, 2, 2}, layout::bcthw, 2.0f);
  const Tensor out = nam_forward(f, BnParams::identity(16), NamConfig{});
  for (float v : out.values()) CHECK(v == doctest::Approx(expect).epsilon(1e-5));

  const Tensor zero = nam_forward(Tensor::zeros({1, 16, 1, 2, 2}, layout::bcthw), BnParams::identity(16),
                                  NamConfig{});
  for (float v : zero.values()) CHECK(v == 0.0f);
}

TEST_CASE("contraction and sign preservation") {
  Rng rng(3);
  const auto bn = BnParams::identity(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor f = seeded_uniform({1, 16, 2, 4, 4}, layout::bcthw, -5.0f, 5.0f, rng);
    const Tensor gated = nam_global(f, bn);
    const Tensor out = nam_forward(f, bn, NamConfig{});
    CHECK(out.dims() == f.dims());
    for (std::size_t i = 0; i < f.size(); ++i) {
      REQUIRE(std::abs(gated[i]) <= std::abs(f[i]));
      REQUIRE(std::abs(out[i]) <= std::abs(gated[i]));
      if (f[i] != 0.0f) REQUIRE(std::signbit(out[i]) == std::signbit(f[i]));
    }
  }
}
