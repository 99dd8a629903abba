// SPDX-License-Identifier: Apache-2.0
#include "duet/errors.hpp"
#include "duet/vision.hpp"

namespace duet {
namespace {

// Shared index map: for each unshuffled flat index, the flat index in the
// spatial layout [n, c, side, side].
std::vector<std::size_t> unshuffle_map(std::size_t n, std::size_t c, std::size_t side, std::size_t r) {
  const std::size_t out_side = side / r;
  std::vector<std::size_t> map(n * c * side * side);
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t dr = 0; dr < r; ++dr) {
        for (std::size_t dc = 0; dc < r; ++dc) {
          for (std::size_t i = 0; i < out_side; ++i) {
            for (std::size_t j = 0; j < out_side; ++j) {
              map[o++] = ((b * c + ch) * side + (i * r + dr)) * side + (j * r + dc);
            }
          }
        }
      }
    }
  }
  return map;
}

Tensor gather(const char* op, const Tensor& in, Shape out_shape, std::vector<std::size_t> map) {
  std::vector<double> out(map.size());
  const auto d = in.data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = d[map[o]];
  return make_result(op, std::move(out_shape), std::move(out), {in},
                     [map = std::move(map)](detail::Node& self) {
                       detail::Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += self.grad[o];
                     });
}

}  // namespace

TokenGrid TokenGrid::from_tensor(Tensor data) {
  const Shape& s = data.shape();
  if (s.size() != 4 || s[2] != s[3]) {
    throw DimensionError("TokenGrid: expected [n_tiles, channels, side, side], got " + shape_str(s));
  }
  return TokenGrid{s[0], s[2], s[1], std::move(data)};
}

TokenGrid pixel_unshuffle(const TokenGrid& grid, std::size_t r) {
  if (r == 0 || grid.side % r != 0) {
    throw DimensionError("pixel_unshuffle: side " + std::to_string(grid.side) +
                         " not divisible by r=" + std::to_string(r) + " for " + shape_str(grid.data.shape()));
  }
  const std::size_t out_side = grid.side / r;
  auto map = unshuffle_map(grid.n_tiles, grid.channels, grid.side, r);
  Tensor out = gather("pixel-unshuffle", grid.data,
                      {grid.n_tiles, grid.channels * r * r, out_side, out_side}, std::move(map));
  return TokenGrid{grid.n_tiles, out_side, grid.channels * r * r, std::move(out)};
}

TokenGrid pixel_shuffle(const TokenGrid& grid, std::size_t r) {
  if (r == 0 || grid.channels % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: channels " + std::to_string(grid.channels) +
                         " not divisible by r^2=" + std::to_string(r * r));
  }
  const std::size_t c = grid.channels / (r * r);
  const std::size_t side = grid.side * r;
  // Invert the unshuffle permutation: spatial[map[o]] = unshuffled[o].
  const auto fwd = unshuffle_map(grid.n_tiles, c, side, r);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t o = 0; o < fwd.size(); ++o) inv[fwd[o]] = o;
  Tensor out = gather("pixel-shuffle", grid.data, {grid.n_tiles, c, side, side}, std::move(inv));
  return TokenGrid{grid.n_tiles, side, c, std::move(out)};
}

std::size_t token_budget(const EncoderConfig& a, const EncoderConfig& b) {
  a.validate();
  b.validate();
  return a.tokens_per_tile() + b.tokens_per_tile();
}

}  // namespace duet
