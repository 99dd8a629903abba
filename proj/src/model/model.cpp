// SPDX-License-Identifier: Apache-2.0
#include "duet/model.hpp"

#include "duet/errors.hpp"

namespace duet {

const char* to_string(EncoderSet s) {
  switch (s) {
    case EncoderSet::A: return "A";
    case EncoderSet::B: return "B";
    case EncoderSet::AB: return "A+B";
  }
  return "A+B";
}

EncoderSet encoder_set_from_string(const std::string& s) {
  if (s == "A") return EncoderSet::A;
  if (s == "B") return EncoderSet::B;
  if (s == "A+B") return EncoderSet::AB;
  throw ConfigError("unknown encoder set '" + s + "' (expected A|B|A+B)");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder_a.name = "encoderA";
  c.encoder_a.tile_size = 32;
  c.encoder_a.patch_size = 4;
  c.encoder_a.grid_side = 8;
  c.encoder_a.embed_dim = 16;
  c.encoder_a.heads = 2;
  c.encoder_a.unshuffle_r = 2;
  c.encoder_a.basis = PatchBasis::mean;

  c.encoder_b.name = "encoderB";
  c.encoder_b.tile_size = 32;
  c.encoder_b.patch_size = 2;
  c.encoder_b.grid_side = 16;
  c.encoder_b.embed_dim = 4;
  c.encoder_b.heads = 1;
  c.encoder_b.unshuffle_r = 4;
  c.encoder_b.basis = PatchBasis::detail;
  return c;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.encoder_a.name = "encoderA";
  c.encoder_a.tile_size = 448;
  c.encoder_a.patch_size = 14;
  c.encoder_a.grid_side = 32;
  c.encoder_a.embed_dim = 1024;
  c.encoder_a.heads = 16;
  c.encoder_a.unshuffle_r = 2;

  c.encoder_b.name = "encoderB";
  c.encoder_b.tile_size = 448;
  c.encoder_b.patch_size = 7;
  c.encoder_b.grid_side = 64;
  c.encoder_b.embed_dim = 256;
  c.encoder_b.heads = 8;
  c.encoder_b.unshuffle_r = 4;

  c.lm.d_lm = 4096;
  c.lm.heads = 32;
  c.lm.layers = 32;
  c.lm.context_limit = 8196;
  return c;
}

std::size_t ModelConfig::encoder_tokens_per_tile() const {
  std::size_t n = 0;
  if (uses_a()) n += encoder_a.tokens_per_tile();
  if (uses_b()) n += encoder_b.tokens_per_tile();
  return n;
}

std::size_t ModelConfig::fused_tokens_per_tile() const {
  if (encoders != EncoderSet::AB) return encoder_tokens_per_tile();
  return fusion_requires_equal_counts(fusion) ? encoder_a.tokens_per_tile() : encoder_tokens_per_tile();
}

void ModelConfig::validate() const {
  if (uses_a()) encoder_a.validate();
  if (uses_b()) encoder_b.validate();
  lm.validate();
  if (encoders == EncoderSet::AB) {
    if (encoder_a.name == encoder_b.name) throw ConfigError("encoders must have distinct names");
    if (encoder_a.tile_size != encoder_b.tile_size) {
      throw ConfigError("encoder tile sizes differ (" + std::to_string(encoder_a.tile_size) + " vs " +
                        std::to_string(encoder_b.tile_size) + ")");
    }
    if (fusion_requires_equal_counts(fusion) && encoder_a.tokens_per_tile() != encoder_b.tokens_per_tile()) {
      throw ConfigError(std::string("fusion ") + to_string(fusion) + " needs equal tokens per tile, got " +
                        std::to_string(encoder_a.tokens_per_tile()) + " and " +
                        std::to_string(encoder_b.tokens_per_tile()));
    }
    if (fusion == FusionKind::pre_sequence &&
        encoder_a.unshuffled_channels() != encoder_b.unshuffled_channels()) {
      throw ConfigError("fusion pre-sequence needs equal feature widths, got " +
                        std::to_string(encoder_a.unshuffled_channels()) + " and " +
                        std::to_string(encoder_b.unshuffled_channels()));
    }
  }
  if (projector_hidden == 0) throw ConfigError("projector_hidden must be positive");
  if (max_tiles == 0) throw ConfigError("max_tiles must be positive");
}

HybridModel::HybridModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::uint64_t seed = cfg_.seed;
  const std::size_t d = cfg_.lm.d_lm;
  const std::size_t hid = cfg_.projector_hidden;
  if (cfg_.uses_a()) enc_a_.emplace(cfg_.encoder_a, seed);
  if (cfg_.uses_b()) enc_b_.emplace(cfg_.encoder_b, seed);
  pre_fusion_ = cfg_.encoders == EncoderSet::AB &&
                (cfg_.fusion == FusionKind::pre_sequence || cfg_.fusion == FusionKind::pre_channel);
  if (pre_fusion_) {
    const std::size_t ca = cfg_.encoder_a.unshuffled_channels();
    const std::size_t cb = cfg_.encoder_b.unshuffled_channels();
    const std::size_t in = cfg_.fusion == FusionKind::pre_channel ? ca + cb : ca;
    proj_shared_ = Projector("projector_shared", in, hid, d, seed);
  } else {
    if (cfg_.uses_a()) proj_a_ = Projector("projectorA", cfg_.encoder_a.unshuffled_channels(), hid, d, seed);
    if (cfg_.uses_b()) proj_b_ = Projector("projectorB", cfg_.encoder_b.unshuffled_channels(), hid, d, seed);
    if (cfg_.encoders == EncoderSet::AB && cfg_.fusion == FusionKind::post_channel) {
      down_ = Linear("fusion_down", 2 * d, d, seed, false);
    }
  }
  lm_ = ToyLM(cfg_.lm, seed, "lm");
}

TileSet HybridModel::tile(const ImageBuffer& img) const {
  const std::size_t ts = cfg_.tile_size();
  if (cfg_.tiling) return segment(img, ts, cfg_.max_tiles, cfg_.thumbnail);
  TileSet out;
  out.grid = TileGrid{1, 1};
  out.source_height = img.height;
  out.source_width = img.width;
  out.tiles.push_back(resize_bilinear(img, ts, ts));
  return out;
}

ImageFeatures HybridModel::encode(const ImageBuffer& img) const {
  const TileSet tiles = tile(img);
  ImageFeatures f;
  f.n_patches = tiles.patch_count();
  if (enc_a_) {
    const EncoderConfig& c = enc_a_->config();
    f.a = enc_a_->encode(normalize(tiles, c.norm_mean, c.norm_std));
  }
  if (enc_b_) {
    const EncoderConfig& c = enc_b_->config();
    f.b = enc_b_->encode(normalize(tiles, c.norm_mean, c.norm_std));
  }
  return f;
}

VisualSequence HybridModel::visual(const ImageFeatures& f) const {
  if (f.a.has_value() != cfg_.uses_a() || f.b.has_value() != cfg_.uses_b()) {
    throw ContractError("visual: features do not match the configured encoder set");
  }
  if (pre_fusion_) return fuse_pre(*f.a, *f.b, cfg_.fusion, proj_shared_);
  if (!f.b) return project(proj_a_, *f.a, Branch::A);
  if (!f.a) return project(proj_b_, *f.b, Branch::B);
  VisualSequence va = project(proj_a_, *f.a, Branch::A);
  VisualSequence vb = project(proj_b_, *f.b, Branch::B);
  if (cfg_.fusion == FusionKind::post_channel) return fuse_post_channel(va, vb, down_);
  return fuse_post_interleave(va, vb);
}

AssembledSequence HybridModel::assemble(const std::vector<ImageFeatures>& images, const std::string& question,
                                        const std::string& answer) const {
  std::vector<VisualSequence> vis;
  vis.reserve(images.size());
  for (const ImageFeatures& f : images) vis.push_back(visual(f));
  return splice(tokenize(build_prompt(images.size(), question)), answer_tokens(answer), vis, lm_.embed_table(),
                cfg_.lm.context_limit);
}

AssembledSequence HybridModel::assemble_prompt(const std::vector<ImageFeatures>& images,
                                               const std::string& question) const {
  std::vector<VisualSequence> vis;
  vis.reserve(images.size());
  for (const ImageFeatures& f : images) vis.push_back(visual(f));
  return splice(tokenize(build_prompt(images.size(), question)), {}, vis, lm_.embed_table(), cfg_.lm.context_limit);
}

ParameterRefs HybridModel::parameters() {
  ParameterRefs out;
  if (enc_a_) enc_a_->collect(out);
  if (enc_b_) enc_b_->collect(out);
  if (pre_fusion_) {
    proj_shared_.collect(out);
  } else {
    if (cfg_.uses_a()) proj_a_.collect(out);
    if (cfg_.uses_b()) proj_b_.collect(out);
    if (down_.weight.tensor.defined()) down_.collect(out);
  }
  lm_.collect(out);
  return out;
}

std::vector<TokenId> answer_tokens(const std::string& answer) {
  std::vector<TokenId> ids = tokenize(answer);
  ids.push_back(tok::kEos);
  return ids;
}

}  // namespace duet
