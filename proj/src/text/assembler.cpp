// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "duet/errors.hpp"
#include "duet/text.hpp"

namespace duet {

std::size_t spliced_length(const std::vector<TokenId>& prompt_ids, const std::vector<TokenId>& answer_ids,
                           const std::vector<std::size_t>& visual_sizes) {
  const auto markers = static_cast<std::size_t>(std::count(prompt_ids.begin(), prompt_ids.end(), tok::kImgContext));
  std::size_t total = prompt_ids.size() - markers + answer_ids.size();
  for (std::size_t n : visual_sizes) total += n;
  return total;
}

AssembledSequence splice(const std::vector<TokenId>& prompt_ids, const std::vector<TokenId>& answer_ids,
                         const std::vector<VisualSequence>& visual, const Tensor& embed_table,
                         std::size_t context_limit) {
  const auto markers = static_cast<std::size_t>(std::count(prompt_ids.begin(), prompt_ids.end(), tok::kImgContext));
  if (markers != visual.size()) {
    throw ContractError("splice: prompt has " + std::to_string(markers) + " image markers but " +
                        std::to_string(visual.size()) + " images were given");
  }
  if (std::find(answer_ids.begin(), answer_ids.end(), tok::kImgContext) != answer_ids.end()) {
    throw ContractError("splice: answer contains an image marker");
  }
  std::vector<std::size_t> sizes;
  for (const VisualSequence& v : visual) sizes.push_back(v.size());
  const std::size_t L = spliced_length(prompt_ids, answer_ids, sizes);
  if (L > context_limit) throw BudgetError(L, context_limit);
  if (L == 0) throw ContractError("splice: empty sequence");
  const std::size_t d = embed_table.dim(1);

  AssembledSequence seq;
  seq.token_ids.reserve(L);
  seq.loss_mask.reserve(L);
  std::vector<Tensor> parts;
  std::vector<TokenId> run;
  auto flush = [&] {
    if (!run.empty()) parts.push_back(embedding(embed_table, run));
    run.clear();
  };
  std::size_t image = 0;
  for (TokenId id : prompt_ids) {
    if (id != tok::kImgContext) {
      run.push_back(id);
      seq.token_ids.push_back(id);
      seq.loss_mask.push_back(0);
      continue;
    }
    flush();
    const VisualSequence& v = visual[image++];
    if (v.empty()) continue;
    if (v.embeddings.dim(1) != d) {
      throw DimensionError("splice: visual width " + std::to_string(v.embeddings.dim(1)) + " vs embedding width " +
                           std::to_string(d));
    }
    parts.push_back(v.embeddings);
    seq.token_ids.insert(seq.token_ids.end(), v.size(), tok::kImgContext);
    seq.loss_mask.insert(seq.loss_mask.end(), v.size(), 0);
  }
  for (TokenId id : answer_ids) {
    run.push_back(id);
    seq.token_ids.push_back(id);
    seq.loss_mask.push_back(1);
  }
  flush();
  seq.embeddings = parts.size() == 1 ? parts.front() : concat(parts, 0);
  seq.positions.resize(L);
  for (std::size_t i = 0; i < L; ++i) seq.positions[i] = i;
  return seq;
}

}  // namespace duet
