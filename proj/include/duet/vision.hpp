// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "duet/image.hpp"
#include "duet/nn.hpp"

namespace duet {

/// Which view of each pixel patch reaches the patch embedding.
///  full   - every pixel value
///  mean   - the per-channel patch average (a coarse, semantic-style branch)
///  detail - the patch minus its per-channel average (a fine-structure branch)
enum class PatchBasis { full, mean, detail };

const char* to_string(PatchBasis b);
PatchBasis patch_basis_from_string(const std::string& s);

struct EncoderConfig {
  std::string name = "encoderA";
  std::size_t tile_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t embed_dim = 16;
  std::size_t depth = 1;
  std::size_t heads = 2;
  std::size_t grid_side = 8;
  std::size_t unshuffle_r = 2;
  PatchBasis basis = PatchBasis::full;
  std::vector<double> norm_mean{0.5, 0.5, 0.5};
  std::vector<double> norm_std{0.25, 0.25, 0.25};

  /// Throws DimensionError when the shape invariants do not hold.
  void validate() const;
  std::size_t tokens_per_tile() const {
    const std::size_t s = grid_side / unshuffle_r;
    return s * s;
  }
  std::size_t unshuffled_channels() const { return embed_dim * unshuffle_r * unshuffle_r; }
  std::size_t patch_values() const { return patch_size * patch_size * channels; }
  std::size_t basis_dim() const;
};

/// Per-tile spatial features, data shaped [n_tiles, channels, side, side].
struct TokenGrid {
  std::size_t n_tiles = 0;
  std::size_t side = 0;
  std::size_t channels = 0;
  Tensor data;

  static TokenGrid from_tensor(Tensor data);
};

/// out[n, c*r*r + dr*r + dc, i, j] = in[n, c, i*r + dr, j*r + dc]
TokenGrid pixel_unshuffle(const TokenGrid& grid, std::size_t r);
/// Exact inverse of pixel_unshuffle.
TokenGrid pixel_shuffle(const TokenGrid& grid, std::size_t r);

/// Post-unshuffle tokens per tile for both branches together.
std::size_t token_budget(const EncoderConfig& a, const EncoderConfig& b);

/// Patch-embedding transformer: patchify -> basis -> linear embed -> + learned
/// positions -> depth pre-norm blocks -> final norm.
class VisionEncoder {
 public:
  VisionEncoder(EncoderConfig cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }

  /// Stacks normalized patches into [n, tile, tile, channels].
  static Tensor stack_patches(const std::vector<const ImageBuffer*>& patches);

  /// Raw encoder grid [n, embed_dim, grid_side, grid_side] (before unshuffle).
  TokenGrid encode_raw(const Tensor& pixels) const;
  /// Encodes every patch (tiles then thumbnail) of a TileSet already
  /// normalized with this branch's statistics, then applies the pixel unshuffle.
  TokenGrid encode(const TileSet& normalized) const;
  TokenGrid encode_pixels(const Tensor& pixels) const;

  void collect(ParameterRefs& out);

 private:
  EncoderConfig cfg_;
  Tensor basis_;  // constant [patch_values, basis_dim]; undefined for the full basis
  Linear embed_;
  Parameter pos_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
};

}  // namespace duet
