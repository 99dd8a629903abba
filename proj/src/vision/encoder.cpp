// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "duet/errors.hpp"
#include "duet/vision.hpp"

namespace duet {

const char* to_string(PatchBasis b) {
  switch (b) {
    case PatchBasis::full: return "full";
    case PatchBasis::mean: return "mean";
    case PatchBasis::detail: return "detail";
  }
  return "full";
}

PatchBasis patch_basis_from_string(const std::string& s) {
  if (s == "full") return PatchBasis::full;
  if (s == "mean") return PatchBasis::mean;
  if (s == "detail") return PatchBasis::detail;
  throw ConfigError("unknown patch basis '" + s + "' (expected full|mean|detail)");
}

std::size_t EncoderConfig::basis_dim() const {
  return basis == PatchBasis::mean ? channels : patch_values();
}

void EncoderConfig::validate() const {
  auto fail = [&](const std::string& what) { throw DimensionError("encoder " + name + ": " + what); };
  if (patch_size == 0 || grid_side == 0 || unshuffle_r == 0 || embed_dim == 0 || heads == 0 || channels == 0) {
    fail("sizes must be positive");
  }
  if (grid_side * patch_size != tile_size) {
    fail("grid_side " + std::to_string(grid_side) + " x patch_size " + std::to_string(patch_size) +
         " != tile_size " + std::to_string(tile_size));
  }
  if (grid_side % unshuffle_r != 0) {
    fail("grid_side " + std::to_string(grid_side) + " not divisible by unshuffle_r " + std::to_string(unshuffle_r));
  }
  if (embed_dim % heads != 0) fail("embed_dim not divisible by heads");
  if (norm_mean.size() != channels || norm_std.size() != channels) fail("normalization statistics must match channels");
}

VisionEncoder::VisionEncoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t pv = cfg_.patch_values();
  const std::size_t C = cfg_.channels;
  const double inv_area = 1.0 / static_cast<double>(cfg_.patch_size * cfg_.patch_size);
  if (cfg_.basis != PatchBasis::full) {
    const std::size_t bd = cfg_.basis_dim();
    std::vector<double> m(pv * bd, 0.0);
    for (std::size_t k = 0; k < pv; ++k) {
      for (std::size_t j = 0; j < bd; ++j) {
        if (cfg_.basis == PatchBasis::mean) {
          m[k * bd + j] = (k % C == j) ? inv_area : 0.0;
        } else {
          m[k * bd + j] = (k == j ? 1.0 : 0.0) - (k % C == j % C ? inv_area : 0.0);
        }
      }
    }
    basis_ = Tensor::from({pv, bd}, std::move(m));
  }
  const std::string& n = cfg_.name;
  embed_ = Linear(n + ".patch_embed", cfg_.basis_dim(), cfg_.embed_dim, seed);
  pos_ = make_parameter(n + ".pos_embed", {cfg_.grid_side * cfg_.grid_side, cfg_.embed_dim}, Init::normal, seed, 0.02);
  for (std::size_t d = 0; d < cfg_.depth; ++d) {
    blocks_.emplace_back(n + ".block" + std::to_string(d), cfg_.embed_dim, cfg_.heads, seed);
  }
  final_norm_ = LayerNorm(n + ".norm", cfg_.embed_dim);
}

Tensor VisionEncoder::stack_patches(const std::vector<const ImageBuffer*>& patches) {
  if (patches.empty()) throw ContractError("encode: no patches");
  const ImageBuffer& first = *patches.front();
  std::vector<double> data;
  data.reserve(patches.size() * first.pixels.size());
  for (const ImageBuffer* p : patches) {
    if (p->height != first.height || p->width != first.width || p->channels != first.channels) {
      throw DimensionError("encode: patches differ in size");
    }
    data.insert(data.end(), p->pixels.begin(), p->pixels.end());
  }
  return Tensor::from({patches.size(), first.height, first.width, first.channels}, std::move(data));
}

TokenGrid VisionEncoder::encode_raw(const Tensor& pixels) const {
  const Shape& s = pixels.shape();
  const std::size_t p = cfg_.patch_size;
  if (s.size() != 4 || s[1] != s[2] || s[3] != cfg_.channels || s[1] % p != 0) {
    throw DimensionError("encode " + cfg_.name + ": tile batch " + shape_str(s) +
                         " not divisible into " + std::to_string(p) + "px patches");
  }
  if (s[1] != cfg_.tile_size) {
    throw DimensionError("encode " + cfg_.name + ": tile size " + std::to_string(s[1]) + " != configured " +
                         std::to_string(cfg_.tile_size));
  }
  const std::size_t n = s[0];
  const std::size_t g = cfg_.grid_side;
  const std::size_t C = cfg_.channels;
  const std::size_t P = g * g;
  const std::size_t D = cfg_.embed_dim;
  // [n, g, p, g, p, C] -> [n, g, g, p, p, C] -> [n*P, p*p*C]
  Tensor patches = reshape(permute(reshape(pixels, {n, g, p, g, p, C}), {0, 1, 3, 2, 4, 5}), {n * P, p * p * C});
  if (basis_.defined()) patches = matmul(patches, basis_);
  Tensor x = reshape(embed_(patches), {n, P, D});
  x = add_rowwise(x, pos_.tensor);
  for (const TransformerBlock& b : blocks_) x = b(x, false);
  x = final_norm_(reshape(x, {n * P, D}));
  Tensor grid = reshape(permute(reshape(x, {n, P, D}), {0, 2, 1}), {n, D, g, g});
  return TokenGrid{n, g, D, std::move(grid)};
}

TokenGrid VisionEncoder::encode_pixels(const Tensor& pixels) const {
  return pixel_unshuffle(encode_raw(pixels), cfg_.unshuffle_r);
}

TokenGrid VisionEncoder::encode(const TileSet& normalized) const {
  return encode_pixels(stack_patches(normalized.patches()));
}

void VisionEncoder::collect(ParameterRefs& out) {
  embed_.collect(out);
  out.push_back(&pos_);
  for (TransformerBlock& b : blocks_) b.collect(out);
  final_norm_.collect(out);
}

}  // namespace duet
