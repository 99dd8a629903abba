// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "duet/errors.hpp"
#include "duet/finite_diff.hpp"
#include "duet/fusion.hpp"
#include "oracles.hpp"

using namespace duet;

TEST_SUITE("fusion") {
  TEST_CASE("post-interleave keeps per-branch order inside tile blocks") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 1 + rng.below(7);
      const std::size_t ta = 1 + rng.below(9);
      const std::size_t tb = 1 + rng.below(9);
      const std::size_t d = 1 + rng.below(5);
      const auto a = oracle::random_sequence(rng, n, ta, d, Branch::A);
      const auto b = oracle::random_sequence(rng, n, tb, d, Branch::B);
      const auto out = fuse_post_interleave(a, b);
      CHECK(oracle::check_interleave(a, b, out) == "");
      CHECK_NOTHROW(out.validate());
    }
  }

  TEST_CASE("post-interleave with an empty branch is the other branch") {
    Rng rng(2);
    const auto a = oracle::random_sequence(rng, 3, 4, 2, Branch::A);
    VisualSequence empty;
    empty.n_tiles = 3;
    const auto out = fuse_post_interleave(a, empty);
    CHECK(out.provenance == a.provenance);
    CHECK(std::equal(out.embeddings.data().begin(), out.embeddings.data().end(), a.embeddings.data().begin()));
  }

  TEST_CASE("post-interleave rejects mismatched tile sets") {
    Rng rng(3);
    const auto a = oracle::random_sequence(rng, 2, 4, 2, Branch::A);
    const auto b = oracle::random_sequence(rng, 3, 4, 2, Branch::B);
    CHECK_THROWS_AS(fuse_post_interleave(a, b), ContractError);
  }

  TEST_CASE("post-channel length law and unequal counts") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 1 + rng.below(5);
      const std::size_t T = 1 + rng.below(8);
      const std::size_t d = 1 + rng.below(4);
      const Linear down("down", 2 * d, d, 7, false);
      const auto a = oracle::random_sequence(rng, n, T, d, Branch::A);
      const auto b = oracle::random_sequence(rng, n, T, d, Branch::B);
      const auto out = fuse_post_channel(a, b, down);
      CHECK(out.size() == n * T);
      CHECK(out.embeddings.shape() == Shape{n * T, d});
      CHECK(out.provenance.front().branch == Branch::fused);
      CHECK_NOTHROW(out.validate());
    }
    const Linear down("down", 4, 2, 7, false);
    const auto a = oracle::random_sequence(rng, 2, 3, 2, Branch::A);
    const auto b = oracle::random_sequence(rng, 2, 4, 2, Branch::B);
    CHECK_THROWS_AS(fuse_post_channel(a, b, down), ContractError);
  }

  TEST_CASE("post-channel matches the explicit per-token formula") {
    Rng rng(5);
    const Linear down("down", 4, 2, 9, false);
    const auto a = oracle::random_sequence(rng, 2, 3, 2, Branch::A);
    const auto b = oracle::random_sequence(rng, 2, 3, 2, Branch::B);
    const auto out = fuse_post_channel(a, b, down);
    const auto W = down.weight.tensor.data();
    for (std::size_t k = 0; k < 6; ++k) {
      for (std::size_t j = 0; j < 2; ++j) {
        double want = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
          want += a.embeddings.data()[k * 2 + c] * W[c * 2 + j];
          want += b.embeddings.data()[k * 2 + c] * W[(2 + c) * 2 + j];
        }
        CHECK(out.embeddings.data()[k * 2 + j] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("pre-adaptation lengths and feature checks") {
    Rng rng(6);
    auto grid = [&](std::size_t n, std::size_t c, std::size_t s) {
      std::vector<double> v(n * c * s * s);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      return TokenGrid::from_tensor(Tensor::from({n, c, s, s}, v));
    };
    const TokenGrid a = grid(2, 6, 2);
    const TokenGrid b = grid(2, 6, 3);
    const Projector seq_proj("shared", 6, 8, 4, 1);
    const auto s = fuse_pre(a, b, FusionKind::pre_sequence, seq_proj);
    CHECK(s.size() == 2 * (4 + 9));
    CHECK_NOTHROW(s.validate());
    CHECK_THROWS_AS(fuse_pre(a, b, FusionKind::pre_channel, Projector("p", 12, 8, 4, 1)), DimensionError);

    const TokenGrid c = grid(2, 5, 2);
    const Projector ch_proj("shared", 11, 8, 4, 1);
    const auto ch = fuse_pre(a, c, FusionKind::pre_channel, ch_proj);
    CHECK(ch.size() == 2 * 4);
    CHECK_THROWS_AS(fuse_pre(a, c, FusionKind::pre_sequence, seq_proj), DimensionError);
  }

  TEST_CASE("fusion kind names") {
    for (auto k : {FusionKind::post_interleave, FusionKind::post_channel, FusionKind::pre_sequence,
                   FusionKind::pre_channel}) {
      CHECK(fusion_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(fusion_kind_from_string("late"), ConfigError);
  }

  TEST_CASE("projector and post-channel gradients") {
    Rng rng(7);
    const Projector p("p", 3, 5, 2, 4);
    std::vector<double> v(4 * 3);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    Tensor x = Tensor::from({4, 3}, v, true);
    backward(sum(p(x)));
    std::vector<double> analytic(x.grad().begin(), x.grad().end());
    const Tensor numeric = finite_difference_grad([&](const Tensor& in) { return sum(p(in)).item(); }, x, 1e-6);
    CHECK(max_relative_error(analytic, numeric.data(), 1e-6) < 1e-6);
  }
}
