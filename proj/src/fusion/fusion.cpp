// SPDX-License-Identifier: Apache-2.0
#include <map>

#include "duet/errors.hpp"
#include "duet/fusion.hpp"

namespace duet {

const char* to_string(FusionKind k) {
  switch (k) {
    case FusionKind::post_interleave: return "post-interleave";
    case FusionKind::post_channel: return "post-channel";
    case FusionKind::pre_sequence: return "pre-sequence";
    case FusionKind::pre_channel: return "pre-channel";
  }
  return "post-interleave";
}

FusionKind fusion_kind_from_string(const std::string& s) {
  if (s == "post-interleave") return FusionKind::post_interleave;
  if (s == "post-channel") return FusionKind::post_channel;
  if (s == "pre-sequence") return FusionKind::pre_sequence;
  if (s == "pre-channel") return FusionKind::pre_channel;
  throw ConfigError("unknown fusion kind '" + s +
                    "' (expected post-interleave|post-channel|pre-sequence|pre-channel)");
}

bool fusion_requires_equal_counts(FusionKind k) {
  return k == FusionKind::post_channel || k == FusionKind::pre_channel;
}

void VisualSequence::validate() const {
  if (provenance.empty()) {
    if (embeddings.defined()) throw ContractError("visual sequence: embeddings without provenance");
    return;
  }
  if (!embeddings.defined() || embeddings.rank() != 2 || embeddings.dim(0) != provenance.size()) {
    throw ContractError("visual sequence: provenance length " + std::to_string(provenance.size()) +
                        " does not match embeddings");
  }
  std::map<std::pair<std::size_t, Branch>, std::size_t> last;
  for (const TokenOrigin& o : provenance) {
    if (o.tile >= n_tiles) throw ContractError("visual sequence: tile index out of range");
    auto key = std::make_pair(o.tile, o.branch);
    auto it = last.find(key);
    if (it != last.end() && o.position <= it->second) {
      throw ContractError("visual sequence: within-tile positions not increasing");
    }
    last[key] = o.position;
  }
}

namespace {

// Token indices of `s` grouped by tile, each group in sequence order.
std::vector<std::vector<std::size_t>> by_tile(const VisualSequence& s) {
  std::vector<std::vector<std::size_t>> groups(s.n_tiles);
  for (std::size_t i = 0; i < s.provenance.size(); ++i) groups[s.provenance[i].tile].push_back(i);
  return groups;
}

}  // namespace

VisualSequence fuse_post_interleave(const VisualSequence& a, const VisualSequence& b) {
  if (a.n_tiles != b.n_tiles) {
    throw ContractError("fuse_post_interleave: tile sets differ (" + std::to_string(a.n_tiles) + " vs " +
                        std::to_string(b.n_tiles) + ")");
  }
  if (b.empty()) return a;
  if (a.empty()) return b;
  if (a.embeddings.dim(1) != b.embeddings.dim(1)) {
    throw DimensionError("fuse_post_interleave: embedding widths differ");
  }
  const auto ga = by_tile(a);
  const auto gb = by_tile(b);
  const std::size_t na = a.size();
  std::vector<std::size_t> order;
  VisualSequence out;
  out.n_tiles = a.n_tiles;
  order.reserve(na + b.size());
  out.provenance.reserve(na + b.size());
  for (std::size_t t = 0; t < a.n_tiles; ++t) {
    for (std::size_t i : ga[t]) {
      order.push_back(i);
      out.provenance.push_back(a.provenance[i]);
    }
    for (std::size_t i : gb[t]) {
      order.push_back(na + i);
      out.provenance.push_back(b.provenance[i]);
    }
  }
  out.embeddings = embedding(concat({a.embeddings, b.embeddings}, 0), order);
  return out;
}

VisualSequence fuse_post_channel(const VisualSequence& a, const VisualSequence& b, const Linear& down) {
  if (a.n_tiles != b.n_tiles) throw ContractError("fuse_post_channel: tile sets differ");
  const auto ga = by_tile(a);
  const auto gb = by_tile(b);
  for (std::size_t t = 0; t < a.n_tiles; ++t) {
    if (ga[t].size() != gb[t].size()) {
      throw ContractError("fuse_post_channel: tile " + std::to_string(t) + " has " + std::to_string(ga[t].size()) +
                          " vs " + std::to_string(gb[t].size()) + " tokens");
    }
  }
  if (a.empty()) return a;
  const std::size_t d = a.embeddings.dim(1);
  if (b.embeddings.dim(1) != d || down.in_dim() != 2 * d) {
    throw DimensionError("fuse_post_channel: down map " + shape_str(down.weight.tensor.shape()) +
                         " vs token width " + std::to_string(d));
  }
  // Align b's tokens with a's order: the k-th tile-t token of a pairs with the k-th of b.
  std::vector<std::size_t> b_rows(a.size());
  for (std::size_t t = 0; t < a.n_tiles; ++t) {
    for (std::size_t k = 0; k < ga[t].size(); ++k) b_rows[ga[t][k]] = gb[t][k];
  }
  VisualSequence out;
  out.n_tiles = a.n_tiles;
  out.embeddings = down(concat({a.embeddings, embedding(b.embeddings, b_rows)}, 1));
  out.provenance.reserve(a.size());
  std::vector<std::size_t> seen(a.n_tiles, 0);
  for (const TokenOrigin& o : a.provenance) out.provenance.push_back({o.tile, Branch::fused, seen[o.tile]++});
  return out;
}

VisualSequence fuse_pre(const TokenGrid& a_raw, const TokenGrid& b_raw, FusionKind kind, const Projector& shared) {
  if (a_raw.n_tiles != b_raw.n_tiles) throw DimensionError("fuse_pre: tile counts differ");
  const std::size_t n = a_raw.n_tiles;
  const std::size_t na = a_raw.side * a_raw.side;
  const std::size_t nb = b_raw.side * b_raw.side;
  VisualSequence out;
  out.n_tiles = n;
  if (kind == FusionKind::pre_sequence) {
    if (a_raw.channels != b_raw.channels) {
      throw DimensionError("fuse_pre(pre-sequence): channel widths differ (" + std::to_string(a_raw.channels) +
                           " vs " + std::to_string(b_raw.channels) + ")");
    }
    const std::size_t C = a_raw.channels;
    Tensor a3 = reshape(flatten_tokens(a_raw), {n, na, C});
    Tensor b3 = reshape(flatten_tokens(b_raw), {n, nb, C});
    out.embeddings = shared(reshape(concat({a3, b3}, 1), {n * (na + nb), C}));
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < na; ++i) out.provenance.push_back({t, Branch::A, i});
      for (std::size_t i = 0; i < nb; ++i) out.provenance.push_back({t, Branch::B, i});
    }
  } else if (kind == FusionKind::pre_channel) {
    if (na != nb) {
      throw DimensionError("fuse_pre(pre-channel): token counts differ (" + std::to_string(na) + " vs " +
                           std::to_string(nb) + ")");
    }
    if (shared.in_dim() != a_raw.channels + b_raw.channels) {
      throw DimensionError("fuse_pre(pre-channel): shared projector in_dim " + std::to_string(shared.in_dim()) +
                           " != " + std::to_string(a_raw.channels + b_raw.channels));
    }
    out.embeddings = shared(concat({flatten_tokens(a_raw), flatten_tokens(b_raw)}, 1));
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < na; ++i) out.provenance.push_back({t, Branch::fused, i});
    }
  } else {
    throw ContractError(std::string("fuse_pre: ") + to_string(kind) + " is not a pre-adaptation strategy");
  }
  return out;
}

}  // namespace duet
