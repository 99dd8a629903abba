// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "duet/errors.hpp"
#include "duet/lm.hpp"
#include "duet/rng.hpp"
#include "duet/trainer.hpp"

using namespace duet;

namespace {

LMConfig small() {
  LMConfig c;
  c.d_lm = 8;
  c.layers = 2;
  c.heads = 2;
  c.context_limit = 32;
  return c;
}

AssembledSequence text_seq(const ToyLM& lm, const std::string& prompt, const std::string& answer) {
  return splice(tokenize(prompt), tokenize(answer), {}, lm.embed_table(), lm.config().context_limit);
}

}  // namespace

TEST_SUITE("lm") {
  TEST_CASE("config checks") {
    LMConfig c = small();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small();
    c.context_limit = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("single position: logits shape, no loss") {
    ToyLM lm(small(), 1);
    const auto out = lm_forward(lm, text_seq(lm, "a", ""));
    CHECK(out.logits.shape() == Shape{1, tok::kVocabSize});
    CHECK_FALSE(out.loss.has_value());
  }

  TEST_CASE("causality: later inputs leave earlier logits bit-identical") {
    ToyLM lm(small(), 2);
    Rng rng(3);
    auto seq = text_seq(lm, "abcdefgh", "");
    const auto base = lm_forward(lm, seq).logits;
    for (std::size_t j = 1; j < seq.size(); ++j) {
      AssembledSequence p = seq;
      std::vector<double> v(p.embeddings.data().begin(), p.embeddings.data().end());
      for (std::size_t c = 0; c < 8; ++c) v[j * 8 + c] += rng.uniform(-1.0, 1.0);
      p.embeddings = Tensor::from(p.embeddings.shape(), v);
      const auto out = lm_forward(lm, p).logits;
      const std::size_t V = tok::kVocabSize;
      CHECK(std::equal(base.data().begin(), base.data().begin() + static_cast<std::ptrdiff_t>(j * V),
                       out.data().begin()));
      CHECK_FALSE(std::equal(base.data().begin(), base.data().end(), out.data().begin()));
    }
  }

  TEST_CASE("uniform logits give ln(vocab)") {
    ToyLM lm(small(), 4);
    for (double& w : lm.output_head().weight.tensor.mutable_data()) w = 0.0;
    const auto out = lm_forward(lm, text_seq(lm, "xy", "abc"));
    REQUIRE(out.loss.has_value());
    CHECK(std::abs(out.loss->item() - std::log(static_cast<double>(tok::kVocabSize))) < 1e-6);
  }

  TEST_CASE("no supervised positions: zero loss, zero gradients") {
    ToyLM lm(small(), 5);
    const auto seq = text_seq(lm, "hello", "");
    const Tensor loss = lm_loss(lm, {&seq});
    CHECK(loss.item() == 0.0);
    ParameterRefs params;
    lm.collect(params);
    backward(loss);
    for (Parameter* p : params) {
      for (double g : p->tensor.grad()) CHECK(g == 0.0);
    }
  }

  TEST_CASE("batched loss equals the mean of per-sample losses") {
    ToyLM lm(small(), 6);
    const auto a = text_seq(lm, "ab", "c");
    const auto b = text_seq(lm, "de", "f");
    const auto c = text_seq(lm, "longer", "gh");
    const double la = lm_forward(lm, a).loss->item();
    const double lb = lm_forward(lm, b).loss->item();
    const double lc = lm_forward(lm, c).loss->item();
    CHECK(lm_loss(lm, {&a, &b, &c}).item() == doctest::Approx((la + lb + lc) / 3.0).epsilon(1e-12));
  }

  TEST_CASE("oversize input is a budget error") {
    ToyLM lm(small(), 7);
    AssembledSequence seq = splice(tokenize(std::string(40, 'x')), {}, {}, lm.embed_table(), 64);
    CHECK_THROWS_AS(lm_forward(lm, seq), BudgetError);
    const auto ok = text_seq(lm, std::string(30, 'x'), "");
    CHECK_THROWS_AS(greedy_decode(lm, ok, 3), BudgetError);
  }

  TEST_CASE("greedy decode: empty, deterministic, learns to copy") {
    ToyLM lm(small(), 8);
    const auto prompt = text_seq(lm, "copy q:", "");
    CHECK(greedy_decode(lm, prompt, 0).empty());
    CHECK(greedy_decode(lm, prompt, 3) == greedy_decode(lm, prompt, 3));

    const auto sample = text_seq(lm, "copy q:", "q</s>");
    ParameterRefs params;
    lm.collect(params);
    AdamW opt;
    for (int step = 0; step < 150; ++step) {
      for (Parameter* p : params) p->tensor.zero_grad();
      backward(lm_loss(lm, {&sample}));
      opt.step(params, 1e-2);
    }
    CHECK(greedy_decode(lm, prompt, 4) == std::vector<TokenId>{'q', tok::kEos});
  }
}
