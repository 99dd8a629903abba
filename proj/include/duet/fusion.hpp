// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duet/nn.hpp"
#include "duet/vision.hpp"

namespace duet {

enum class Branch : std::uint8_t { A = 0, B = 1, fused = 2 };

struct TokenOrigin {
  std::size_t tile = 0;
  Branch branch = Branch::A;
  std::size_t position = 0;  // index within (tile, branch), spatial scan order

  bool operator==(const TokenOrigin&) const = default;
};

/// Projected visual tokens, [n_tokens, d_lm], with per-token provenance.
/// An empty sequence has an undefined tensor.
struct VisualSequence {
  Tensor embeddings;
  std::vector<TokenOrigin> provenance;
  std::size_t n_tiles = 0;

  std::size_t size() const { return provenance.size(); }
  bool empty() const { return provenance.empty(); }
  /// Throws ContractError if provenance is inconsistent with the embeddings.
  void validate() const;
};

enum class FusionKind { post_interleave, post_channel, pre_sequence, pre_channel };

const char* to_string(FusionKind k);
/// Accepts "post-interleave", "post-channel", "pre-sequence", "pre-channel".
FusionKind fusion_kind_from_string(const std::string& s);
bool fusion_requires_equal_counts(FusionKind k);

/// Two-layer GELU MLP from encoder features to the LM width.
struct Projector {
  Linear fc1;
  Linear fc2;

  Projector() = default;
  Projector(const std::string& name, std::size_t in_dim, std::size_t hidden, std::size_t d_lm,
            std::uint64_t seed);

  std::size_t in_dim() const { return fc1.in_dim(); }
  std::size_t out_dim() const { return fc2.out_dim(); }
  /// x: [rows, in_dim] -> [rows, d_lm]
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterRefs& out);
};

/// [n, C, s, s] -> [n*s*s, C], tokens in row-major spatial order per tile.
Tensor flatten_tokens(const TokenGrid& grid);

VisualSequence project(const Projector& p, const TokenGrid& tokens, Branch branch);

/// Per tile, in ascending tile order: all of a's tokens, then all of b's.
VisualSequence fuse_post_interleave(const VisualSequence& a, const VisualSequence& b);

/// down * concat(a_i, b_i) for tokens aligned by within-tile index. `down`
/// maps 2*d_lm -> d_lm.
VisualSequence fuse_post_channel(const VisualSequence& a, const VisualSequence& b, const Linear& down);

/// Concatenate raw post-unshuffle features per tile (sequence or channel axis),
/// then apply one shared projector.
VisualSequence fuse_pre(const TokenGrid& a_raw, const TokenGrid& b_raw, FusionKind kind,
                        const Projector& shared);

}  // namespace duet
