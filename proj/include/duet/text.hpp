// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "duet/fusion.hpp"
#include "duet/tensor.hpp"

namespace duet {

using TokenId = std::size_t;

/// Byte-level vocabulary (ids 0..255) plus six specials.
namespace tok {
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kBos = 257;
inline constexpr TokenId kEos = 258;
inline constexpr TokenId kImgStart = 259;
inline constexpr TokenId kImgEnd = 260;
inline constexpr TokenId kImgContext = 261;
inline constexpr std::size_t kVocabSize = 262;

inline constexpr std::string_view kImgStartText = "<img>";
inline constexpr std::string_view kImgEndText = "</img>";
inline constexpr std::string_view kImgContextText = "<IMG-CONTEXT>";
}  // namespace tok

/// Bytes map to their own id; special literals ("<img>", "</img>",
/// "<IMG-CONTEXT>", "<pad>", "<s>", "</s>") are matched greedily.
std::vector<TokenId> tokenize(std::string_view text);
std::string detokenize(const std::vector<TokenId>& ids);
std::string_view special_literal(TokenId id);

/// One "<img><IMG-CONTEXT></img>" block per image in frame order, then the question.
std::string build_prompt(std::size_t n_images, std::string_view question);

struct AssembledSequence {
  Tensor embeddings;  // [L, d_lm]
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> loss_mask;  // 1 only on answer tokens
  std::vector<std::size_t> positions;

  std::size_t size() const { return token_ids.size(); }
};

/// Expands the k-th IMG_CONTEXT marker of the prompt into the k-th image's
/// visual tokens, embeds text through `embed_table` [vocab, d_lm] and appends
/// the answer. Throws BudgetError before any compute if the result is longer
/// than `context_limit`.
AssembledSequence splice(const std::vector<TokenId>& prompt_ids, const std::vector<TokenId>& answer_ids,
                         const std::vector<VisualSequence>& visual, const Tensor& embed_table,
                         std::size_t context_limit);

/// Length splice() would produce.
std::size_t spliced_length(const std::vector<TokenId>& prompt_ids, const std::vector<TokenId>& answer_ids,
                           const std::vector<std::size_t>& visual_sizes);

}  // namespace duet
