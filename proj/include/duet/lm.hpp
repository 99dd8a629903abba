// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "duet/nn.hpp"
#include "duet/text.hpp"

namespace duet {

struct LMConfig {
  std::size_t d_lm = 32;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t vocab = tok::kVocabSize;
  std::size_t context_limit = 512;

  /// Throws ConfigError.
  void validate() const;
};

/// Decoder-only causal transformer with learned absolute positions and an
/// untied output head.
class ToyLM {
 public:
  ToyLM() = default;
  ToyLM(LMConfig cfg, std::uint64_t seed, const std::string& prefix = "lm");

  const LMConfig& config() const { return cfg_; }
  const Tensor& embed_table() const { return tok_embed_.tensor; }

  /// x: [B, L, d_lm] input embeddings -> final-norm hidden states [B, L, d_lm].
  Tensor hidden(const Tensor& x) const;
  /// h: [rows, d_lm] -> logits [rows, vocab]
  Tensor head(const Tensor& h) const;

  void collect(ParameterRefs& out);
  /// Direct access for tests (e.g. zeroing the head).
  Linear& output_head() { return head_; }

 private:
  LMConfig cfg_;
  Parameter tok_embed_;
  Parameter pos_embed_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear head_;
};

struct LMOutput {
  Tensor logits;              // [L, vocab]
  std::optional<Tensor> loss;  // absent when no position is supervised
};

/// Positions t with loss_mask[t+1] set predict token_ids[t+1].
std::vector<std::size_t> supervised_positions(const AssembledSequence& seq);

LMOutput lm_forward(const ToyLM& lm, const AssembledSequence& seq);

/// Mean over samples of each sample's mean next-token cross-entropy. Only
/// supervised rows go through the output head. Samples without any
/// supervised position contribute 0.
Tensor lm_loss(const ToyLM& lm, const std::vector<const AssembledSequence*>& batch);

/// Argmax continuation (ties to the lowest id) until EOS or max_new tokens.
/// The EOS token, if produced, is the last element.
std::vector<TokenId> greedy_decode(const ToyLM& lm, const AssembledSequence& seq, std::size_t max_new);

}  // namespace duet
