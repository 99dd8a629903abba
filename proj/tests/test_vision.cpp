// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "duet/errors.hpp"
#include "duet/model.hpp"
#include "duet/rng.hpp"
#include "duet/vision.hpp"

using namespace duet;

namespace {

TokenGrid random_grid(Rng& rng, std::size_t n, std::size_t c, std::size_t s) {
  std::vector<double> v(n * c * s * s);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return TokenGrid::from_tensor(Tensor::from({n, c, s, s}, std::move(v)));
}

}  // namespace

TEST_SUITE("vision") {
  TEST_CASE("pixel unshuffle matches the index law") {
    Rng rng(1);
    const TokenGrid g = random_grid(rng, 2, 3, 4);
    const TokenGrid u = pixel_unshuffle(g, 2);
    CHECK(u.data.shape() == Shape{2, 12, 2, 2});
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < 2; ++j) {
            for (std::size_t dr = 0; dr < 2; ++dr) {
              for (std::size_t dc = 0; dc < 2; ++dc) {
                CHECK(u.data.at({n, c * 4 + dr * 2 + dc, i, j}) == g.data.at({n, c, i * 2 + dr, j * 2 + dc}));
              }
            }
          }
        }
      }
    }
  }

  TEST_CASE("unshuffle shape law and exact inverse over random shapes") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      const std::size_t r = 1 + rng.below(4);
      const std::size_t s = r * (1 + rng.below(4));
      const std::size_t c = 1 + rng.below(5);
      const std::size_t n = 1 + rng.below(3);
      const TokenGrid g = random_grid(rng, n, c, s);
      const TokenGrid u = pixel_unshuffle(g, r);
      CHECK(u.data.shape() == Shape{n, c * r * r, s / r, s / r});
      const TokenGrid back = pixel_shuffle(u, r);
      CHECK(std::equal(back.data.data().begin(), back.data.data().end(), g.data.data().begin()));
    }
  }

  TEST_CASE("unshuffle rejects indivisible grids") {
    Rng rng(3);
    CHECK_THROWS_AS(pixel_unshuffle(random_grid(rng, 1, 2, 6), 4), DimensionError);
  }

  TEST_CASE("token arithmetic at full scale") {
    const ModelConfig m = ModelConfig::full_scale();
    CHECK(m.encoder_a.tokens_per_tile() == 256);
    CHECK(m.encoder_b.tokens_per_tile() == 256);
    CHECK(token_budget(m.encoder_a, m.encoder_b) == 512);
  }

  TEST_CASE("encoder config invariants") {
    EncoderConfig c;
    c.grid_side = 7;
    CHECK_THROWS_AS(c.validate(), DimensionError);
    EncoderConfig d;
    d.unshuffle_r = 3;
    CHECK_THROWS_AS(d.validate(), DimensionError);
  }

  TEST_CASE("desk encoder output shapes and determinism") {
    const ModelConfig m = ModelConfig::desk();
    VisionEncoder a(m.encoder_a, 5);
    VisionEncoder a2(m.encoder_a, 5);
    Rng rng(4);
    std::vector<double> px(2 * 32 * 32 * 3);
    for (double& v : px) v = rng.uniform(-1.0, 1.0);
    const Tensor pixels = Tensor::from({2, 32, 32, 3}, px);
    const TokenGrid raw = a.encode_raw(pixels);
    CHECK(raw.data.shape() == Shape{2, 16, 8, 8});
    const TokenGrid u = a.encode_pixels(pixels);
    CHECK(u.data.shape() == Shape{2, 64, 4, 4});
    const TokenGrid u2 = a2.encode_pixels(pixels);
    CHECK(std::equal(u.data.data().begin(), u.data.data().end(), u2.data.data().begin()));

    VisionEncoder b(m.encoder_b, 5);
    CHECK(b.encode_pixels(pixels).data.shape() == Shape{2, 64, 4, 4});
    CHECK_THROWS_AS(a.encode_pixels(Tensor::zeros({1, 16, 16, 3})), DimensionError);
  }

  TEST_CASE("patch bases separate coarse and fine content") {
    const ModelConfig m = ModelConfig::desk();
    VisionEncoder a(m.encoder_a, 1);
    VisionEncoder b(m.encoder_b, 1);
    // A zero-mean period-2 pattern is invisible to the mean basis; a constant
    // offset is invisible to the detail basis.
    std::vector<double> base(32 * 32 * 3, 0.1), textured(base), shifted(base);
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          textured[(y * 32 + x) * 3 + c] += (x % 2 == 0 ? 0.3 : -0.3);
          shifted[(y * 32 + x) * 3 + c] += 0.5;
        }
      }
    }
    auto run = [](const VisionEncoder& e, const std::vector<double>& v) {
      const auto t = e.encode_pixels(Tensor::from({1, 32, 32, 3}, v)).data;
      return std::vector<double>(t.data().begin(), t.data().end());
    };
    const auto a0 = run(a, base);
    const auto a1 = run(a, textured);
    for (std::size_t i = 0; i < a0.size(); ++i) CHECK(a0[i] == doctest::Approx(a1[i]).epsilon(1e-12));
    const auto b0 = run(b, base);
    const auto b1 = run(b, shifted);
    for (std::size_t i = 0; i < b0.size(); ++i) CHECK(b0[i] == doctest::Approx(b1[i]).epsilon(1e-12));
    CHECK(run(b, textured) != b0);
    CHECK(run(a, shifted) != a0);
  }
}
