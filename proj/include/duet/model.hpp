// SPDX-License-Identifier: Apache-2.0
#pragma once

// Composition of the full pipeline: tiler -> encoders -> projectors -> fusion
// -> splice -> language model.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "duet/fusion.hpp"
#include "duet/image.hpp"
#include "duet/lm.hpp"
#include "duet/text.hpp"
#include "duet/vision.hpp"

namespace duet {

enum class EncoderSet { A, B, AB };

const char* to_string(EncoderSet s);
/// Accepts "A", "B", "A+B".
EncoderSet encoder_set_from_string(const std::string& s);

struct ModelConfig {
  EncoderSet encoders = EncoderSet::AB;
  EncoderConfig encoder_a;
  EncoderConfig encoder_b;
  FusionKind fusion = FusionKind::post_interleave;
  std::size_t projector_hidden = 64;
  LMConfig lm;
  bool tiling = true;
  std::size_t max_tiles = 6;
  bool thumbnail = true;
  std::uint64_t seed = 0;

  static ModelConfig desk();
  /// Shape-level configuration of the full-size system (448 px tiles).
  static ModelConfig full_scale();

  bool uses_a() const { return encoders != EncoderSet::B; }
  bool uses_b() const { return encoders != EncoderSet::A; }
  std::size_t tile_size() const { return uses_a() ? encoder_a.tile_size : encoder_b.tile_size; }
  /// Post-unshuffle tokens per tile summed over the active branches.
  std::size_t encoder_tokens_per_tile() const;
  /// Visual positions per patch after fusion.
  std::size_t fused_tokens_per_tile() const;
  /// Throws ConfigError (or DimensionError from the encoder shape checks).
  void validate() const;
};

/// Per-image encoder outputs; the entry of an inactive branch is empty.
struct ImageFeatures {
  std::optional<TokenGrid> a;
  std::optional<TokenGrid> b;
  std::size_t n_patches = 0;
};

class HybridModel {
 public:
  explicit HybridModel(ModelConfig cfg);
  HybridModel(const HybridModel&) = delete;
  HybridModel& operator=(const HybridModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const ToyLM& lm() const { return lm_; }

  /// Tiles per the tiling settings; with tiling off the image is resized to a
  /// single tile and no thumbnail is added.
  TileSet tile(const ImageBuffer& img) const;
  ImageFeatures encode(const ImageBuffer& img) const;
  VisualSequence visual(const ImageFeatures& f) const;

  AssembledSequence assemble(const std::vector<ImageFeatures>& images, const std::string& question,
                             const std::string& answer) const;
  /// Prompt-only sequence for decoding.
  AssembledSequence assemble_prompt(const std::vector<ImageFeatures>& images, const std::string& question) const;

  /// Every parameter, in a fixed order, with unique dotted names.
  ParameterRefs parameters();

 private:
  ModelConfig cfg_;
  std::optional<VisionEncoder> enc_a_;
  std::optional<VisionEncoder> enc_b_;
  Projector proj_a_;
  Projector proj_b_;
  Projector proj_shared_;
  Linear down_;
  ToyLM lm_;
  bool pre_fusion_ = false;
};

/// Answer tokens with the trailing EOS that marks the end of generation.
std::vector<TokenId> answer_tokens(const std::string& answer);

}  // namespace duet
