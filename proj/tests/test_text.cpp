// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "duet/errors.hpp"
#include "duet/rng.hpp"
#include "duet/text.hpp"
#include "oracles.hpp"

using namespace duet;

namespace {

Tensor table(std::size_t d) {
  std::vector<double> v(tok::kVocabSize * d);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return Tensor::from({tok::kVocabSize, d}, v);
}

}  // namespace

TEST_SUITE("text") {
  TEST_CASE("tokenize basics") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("<img></img>") == std::vector<TokenId>{tok::kImgStart, tok::kImgEnd});
    CHECK(tokenize("<IMG-CONTEXT>") == std::vector<TokenId>{tok::kImgContext});
    CHECK(tokenize("a<b") == std::vector<TokenId>{'a', '<', 'b'});
    CHECK(tokenize("<s>x</s>") == std::vector<TokenId>{tok::kBos, 'x', tok::kEos});
  }

  TEST_CASE("byte round trip") {
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
      std::string s(rng.below(40), '\0');
      for (char& c : s) c = static_cast<char>(rng.below(256));
      // Strings that happen to spell a special literal are excluded by the invariant.
      const auto ids = tokenize(s);
      if (std::any_of(ids.begin(), ids.end(), [](TokenId id) { return id >= 256; })) continue;
      CHECK(ids.size() == s.size());
      CHECK(detokenize(ids) == s);
    }
  }

  TEST_CASE("prompt template") {
    CHECK(build_prompt(0, "Why?") == "Why?");
    const std::string one = build_prompt(1, "q");
    const auto ids = tokenize(one);
    CHECK(std::count(ids.begin(), ids.end(), tok::kImgStart) == 1);
    CHECK(std::count(ids.begin(), ids.end(), tok::kImgEnd) == 1);
    CHECK(build_prompt(2, "Is it safe to enter the intersection at this time?") ==
          "<img><IMG-CONTEXT></img><img><IMG-CONTEXT></img>\n"
          "Is it safe to enter the intersection at this time?");
  }

  TEST_CASE("splice expands markers in image order and masks all but the answer") {
    Rng rng(2);
    const std::size_t d = 3;
    const Tensor emb = table(d);
    const auto v1 = oracle::random_sequence(rng, 7, 32, d, Branch::A);
    const auto v2 = oracle::random_sequence(rng, 1, 5, d, Branch::B);
    const auto prompt = tokenize(build_prompt(2, "go?"));
    const std::vector<TokenId> answer{'y', tok::kEos};
    const auto seq = splice(prompt, answer, {v1, v2}, emb, 512);
    const std::size_t L = prompt.size() - 2 + 224 + 5 + 2;
    REQUIRE(seq.size() == L);
    CHECK(seq.embeddings.shape() == Shape{L, d});
    CHECK(std::count(seq.token_ids.begin(), seq.token_ids.end(), tok::kImgContext) == 229);
    for (std::size_t i = 0; i < L; ++i) {
      CHECK(seq.positions[i] == i);
      CHECK(static_cast<bool>(seq.loss_mask[i]) == (i >= L - 2));
    }
    // First visual position follows "<img>"; it carries v1's first row.
    CHECK(seq.token_ids[0] == tok::kImgStart);
    CHECK(seq.embeddings.at({1, 0}) == v1.embeddings.at({0, 0}));
    CHECK(seq.embeddings.at({224, 2}) == v1.embeddings.at({223, 2}));
    // Second image comes after "</img><img>".
    CHECK(seq.embeddings.at({227, 1}) == v2.embeddings.at({0, 1}));
    // Text rows are table rows.
    CHECK(seq.embeddings.at({0, 0}) == emb.at({tok::kImgStart, 0}));
  }

  TEST_CASE("pure text splice") {
    const auto seq = splice(tokenize("hi"), {'!'}, {}, table(2), 16);
    CHECK(seq.size() == 3);
    CHECK(seq.loss_mask == std::vector<std::uint8_t>{0, 0, 1});
  }

  TEST_CASE("budget and marker errors") {
    Rng rng(3);
    const auto v = oracle::random_sequence(rng, 7, 32, 2, Branch::A);
    const auto prompt = tokenize(build_prompt(1, "q"));
    try {
      splice(prompt, {'a'}, {v}, table(2), 200);
      FAIL("expected a budget error");
    } catch (const BudgetError& e) {
      CHECK(e.available() == 200);
      CHECK(e.required() == prompt.size() - 1 + 224 + 1);
      CHECK(std::string(e.what()).find("200") != std::string::npos);
    }
    CHECK_THROWS_AS(splice(prompt, {'a'}, {}, table(2), 512), ContractError);
  }
}
