// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>

#include "duet/errors.hpp"
#include "duet/finite_diff.hpp"
#include "duet/rng.hpp"
#include "duet/tensor.hpp"

using namespace duet;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor probe(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

double grad_error(const std::function<Tensor(const Tensor&)>& op, Tensor x, Rng& rng) {
  const Tensor y0 = op(x);
  const Tensor w = random_tensor(rng, y0.shape(), false);
  x.zero_grad();
  backward(probe(op(x), w));
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const Tensor numeric =
      finite_difference_grad([&](const Tensor& in) { return probe(op(in), w).item(); }, x, 1e-6);
  return max_relative_error(analytic, numeric.data(), 1e-6);
}

constexpr int kTrials = 20;
constexpr double kTol = 1e-6;

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul gradients, both operands") {
    Rng rng(1);
    for (int t = 0; t < kTrials; ++t) {
      const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
      Tensor a = random_tensor(rng, {m, k});
      Tensor b = random_tensor(rng, {k, n});
      CHECK(grad_error([&](const Tensor& x) { return matmul(x, b); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return matmul(a, x); }, b, rng) < kTol);
    }
  }

  TEST_CASE("batched matmul gradients") {
    Rng rng(2);
    for (int t = 0; t < kTrials; ++t) {
      Tensor a = random_tensor(rng, {2, 3, 4});
      Tensor b = random_tensor(rng, {2, 4, 2});
      CHECK(grad_error([&](const Tensor& x) { return matmul(x, b); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return matmul(a, x); }, b, rng) < kTol);
    }
  }

  TEST_CASE("elementwise and broadcast gradients") {
    Rng rng(3);
    for (int t = 0; t < kTrials; ++t) {
      Tensor a = random_tensor(rng, {2, 3, 4});
      Tensor b = random_tensor(rng, {2, 3, 4});
      Tensor bias = random_tensor(rng, {3, 4});
      CHECK(grad_error([&](const Tensor& x) { return add(x, b); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return mul(x, b); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return scale(x, -1.7); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return add_rowwise(a, x); }, bias, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return gelu(x); }, a, rng) < kTol);
    }
  }

  TEST_CASE("shape op gradients") {
    Rng rng(4);
    for (int t = 0; t < kTrials; ++t) {
      Tensor a = random_tensor(rng, {2, 3, 4});
      Tensor b = random_tensor(rng, {2, 1, 4});
      CHECK(grad_error([&](const Tensor& x) { return reshape(x, {6, 4}); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return permute(x, {2, 0, 1}); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return slice(x, 2, 1, 3); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return concat({a, x}, 1); }, b, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return mean(x); }, a, rng) < kTol);
    }
  }

  TEST_CASE("softmax, layernorm, embedding, cross-entropy gradients") {
    Rng rng(5);
    for (int t = 0; t < kTrials; ++t) {
      Tensor a = random_tensor(rng, {2, 3, 3});
      Tensor gamma = random_tensor(rng, {3});
      Tensor beta = random_tensor(rng, {3});
      CHECK(grad_error([&](const Tensor& x) { return softmax_lastdim(x); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return softmax_lastdim(x, true); }, a, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return layernorm(x, gamma, beta); }, a, rng) < 1e-5);
      CHECK(grad_error([&](const Tensor& x) { return layernorm(a, x, beta); }, gamma, rng) < kTol);
      CHECK(grad_error([&](const Tensor& x) { return layernorm(a, gamma, x); }, beta, rng) < kTol);

      Tensor table = random_tensor(rng, {5, 3});
      const std::vector<std::size_t> ids{4, 0, 4, 2};
      CHECK(grad_error([&](const Tensor& x) { return embedding(x, ids); }, table, rng) < kTol);

      Tensor logits = random_tensor(rng, {4, 5});
      const std::vector<std::size_t> targets{0, 3, 3, 1};
      CHECK(grad_error([&](const Tensor& x) { return cross_entropy(x, targets); }, logits, rng) < kTol);
    }
  }

  TEST_CASE("cross-entropy of uniform logits is ln V") {
    const Tensor logits = Tensor::zeros({3, 262});
    const std::vector<std::size_t> targets{0, 100, 261};
    CHECK(cross_entropy(logits, targets).item() == doctest::Approx(std::log(262.0)).epsilon(1e-12));
  }

  TEST_CASE("causal softmax masks the upper triangle") {
    Rng rng(6);
    const Tensor a = random_tensor(rng, {3, 3}, false);
    const Tensor s = softmax_lastdim(a, true);
    CHECK(s.at({0, 0}) == 1.0);
    CHECK(s.at({0, 1}) == 0.0);
    CHECK(s.at({1, 2}) == 0.0);
    CHECK(s.at({2, 0}) + s.at({2, 1}) + s.at({2, 2}) == doctest::Approx(1.0));
  }

  TEST_CASE("gradients accumulate through shared inputs") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    backward(sum(add(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 2.0);
  }

  TEST_CASE("no-grad scope records no graph") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor y;
    {
      NoGradGuard g;
      y = sum(mul(x, x));
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(grad_enabled());
  }

  TEST_CASE("frozen leaves still pass gradients to their inputs") {
    Tensor w = Tensor::from({2, 2}, {1, 2, 3, 4}, false);
    Tensor x = Tensor::from({1, 2}, {1, 1}, true);
    backward(sum(matmul(x, w)));
    CHECK_FALSE(w.has_grad());
    CHECK(x.grad()[0] == 3.0);
    CHECK(x.grad()[1] == 7.0);
  }

  TEST_CASE("contract and dimension errors") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(reshape(a, {5}), DimensionError);
    CHECK_THROWS_AS(backward(a), ContractError);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"), DimensionError);
  }

  TEST_CASE("finite-difference helper restores its input") {
    Tensor x = Tensor::from({3}, {0.1, 0.2, 0.3}, true);
    const std::vector<double> before(x.data().begin(), x.data().end());
    finite_difference_grad([](const Tensor& t) { return sum(mul(t, t)).item(); }, x);
    CHECK(std::equal(before.begin(), before.end(), x.data().begin()));
  }
}
