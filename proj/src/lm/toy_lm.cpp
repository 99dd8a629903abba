// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <utility>

#include "duet/errors.hpp"
#include "duet/lm.hpp"

namespace duet {

void LMConfig::validate() const {
  if (d_lm == 0 || heads == 0 || d_lm % heads != 0) {
    throw ConfigError("lm: d_lm " + std::to_string(d_lm) + " is not divisible by heads " + std::to_string(heads));
  }
  if (context_limit < 1) throw ConfigError("lm: context_limit must be >= 1");
  if (vocab < tok::kVocabSize) throw ConfigError("lm: vocab must be >= " + std::to_string(tok::kVocabSize));
}

ToyLM::ToyLM(LMConfig cfg, std::uint64_t seed, const std::string& prefix) : cfg_(cfg) {
  cfg_.validate();
  tok_embed_ = make_parameter(prefix + ".tok_embed", {cfg_.vocab, cfg_.d_lm}, Init::normal, seed, 0.02);
  pos_embed_ = make_parameter(prefix + ".pos_embed", {cfg_.context_limit, cfg_.d_lm}, Init::normal, seed, 0.02);
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    blocks_.emplace_back(prefix + ".block" + std::to_string(i), cfg_.d_lm, cfg_.heads, seed);
  }
  final_norm_ = LayerNorm(prefix + ".final_norm", cfg_.d_lm);
  head_ = Linear(prefix + ".head", cfg_.d_lm, cfg_.vocab, seed);
}

Tensor ToyLM::hidden(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != cfg_.d_lm) {
    throw DimensionError("lm: expected [B, L, " + std::to_string(cfg_.d_lm) + "] input, got " + shape_str(x.shape()));
  }
  const std::size_t L = x.dim(1);
  if (L > cfg_.context_limit) throw BudgetError(L, cfg_.context_limit);
  Tensor h = add_rowwise(x, slice(pos_embed_.tensor, 0, 0, L));
  for (const TransformerBlock& b : blocks_) h = b(h, true);
  return final_norm_(h);
}

Tensor ToyLM::head(const Tensor& h) const { return head_(h); }

void ToyLM::collect(ParameterRefs& out) {
  out.push_back(&tok_embed_);
  out.push_back(&pos_embed_);
  for (TransformerBlock& b : blocks_) b.collect(out);
  final_norm_.collect(out);
  head_.collect(out);
}

std::vector<std::size_t> supervised_positions(const AssembledSequence& seq) {
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    if (seq.loss_mask[t + 1]) rows.push_back(t);
  }
  return rows;
}

namespace {

Tensor as_batch(const AssembledSequence& seq) {
  return reshape(seq.embeddings, {1, seq.size(), seq.embeddings.dim(1)});
}

}  // namespace

LMOutput lm_forward(const ToyLM& lm, const AssembledSequence& seq) {
  const std::size_t L = seq.size();
  if (L > lm.config().context_limit) throw BudgetError(L, lm.config().context_limit);
  Tensor h = reshape(lm.hidden(as_batch(seq)), {L, lm.config().d_lm});
  LMOutput out;
  out.logits = lm.head(h);
  const std::vector<std::size_t> rows = supervised_positions(seq);
  if (!rows.empty()) {
    std::vector<std::size_t> targets;
    for (std::size_t t : rows) targets.push_back(seq.token_ids[t + 1]);
    out.loss = cross_entropy(embedding(out.logits, rows), targets);
  }
  return out;
}

Tensor lm_loss(const ToyLM& lm, const std::vector<const AssembledSequence*>& batch) {
  if (batch.empty()) throw ContractError("lm_loss: empty batch");
  const std::size_t d = lm.config().d_lm;
  // Samples sharing (length, target count) run as one [B, L, d] pass; the mean
  // over their stacked rows then equals the mean of per-sample means.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  std::vector<std::vector<std::size_t>> rows(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const AssembledSequence& s = *batch[i];
    if (s.size() > lm.config().context_limit) throw BudgetError(s.size(), lm.config().context_limit);
    rows[i] = supervised_positions(s);
    if (!rows[i].empty()) groups[{s.size(), rows[i].size()}].push_back(i);
  }
  Tensor total;
  for (const auto& [key, members] : groups) {
    const std::size_t L = key.first;
    std::vector<Tensor> parts;
    std::vector<std::size_t> gather;
    std::vector<std::size_t> targets;
    for (std::size_t b = 0; b < members.size(); ++b) {
      const AssembledSequence& s = *batch[members[b]];
      parts.push_back(as_batch(s));
      for (std::size_t t : rows[members[b]]) {
        gather.push_back(b * L + t);
        targets.push_back(s.token_ids[t + 1]);
      }
    }
    Tensor x = parts.size() == 1 ? parts.front() : concat(parts, 0);
    Tensor h = reshape(lm.hidden(x), {members.size() * L, d});
    Tensor logits = lm.head(embedding(h, gather));
    Tensor group_loss = scale(cross_entropy(logits, targets), static_cast<double>(members.size()));
    total = total.defined() ? add(total, group_loss) : group_loss;
  }
  if (!total.defined()) return Tensor::scalar(0.0);
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<TokenId> greedy_decode(const ToyLM& lm, const AssembledSequence& seq, std::size_t max_new) {
  const std::size_t limit = lm.config().context_limit;
  if (seq.size() + max_new > limit) throw BudgetError(seq.size() + max_new, limit);
  std::vector<TokenId> out;
  if (max_new == 0) return out;
  NoGradGuard no_grad;
  const std::size_t d = lm.config().d_lm;
  Tensor x = seq.embeddings;
  for (std::size_t step = 0; step < max_new; ++step) {
    const std::size_t L = x.dim(0);
    Tensor h = reshape(lm.hidden(reshape(x, {1, L, d})), {L, d});
    Tensor logits = lm.head(slice(h, 0, L - 1, L));
    auto v = logits.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[best]) best = i;
    }
    out.push_back(best);
    if (best == tok::kEos) break;
    const std::size_t id = best;
    x = concat({x, embedding(lm.embed_table(), std::span<const std::size_t>(&id, 1))}, 0);
  }
  return out;
}

}  // namespace duet
