// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "duet/errors.hpp"
#include "duet/image.hpp"

namespace duet {

ImageBuffer::ImageBuffer(std::size_t h, std::size_t w, std::size_t c, double fill)
    : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

std::vector<const ImageBuffer*> TileSet::patches() const {
  std::vector<const ImageBuffer*> out;
  out.reserve(patch_count());
  for (const ImageBuffer& t : tiles) out.push_back(&t);
  if (thumbnail) out.push_back(&*thumbnail);
  return out;
}

std::vector<TileGrid> candidate_grids(std::size_t max_tiles) {
  if (max_tiles < 1) throw ContractError("candidate_grids: max_tiles must be >= 1");
  std::vector<TileGrid> grids;
  for (std::size_t n = 1; n <= max_tiles; ++n) {
    for (std::size_t c = 1; c <= n; ++c) {
      if (n % c == 0) grids.push_back({c, n / c});
    }
  }
  return grids;
}

TileGrid select_grid(std::size_t width, std::size_t height, std::size_t max_tiles,
                     std::size_t tile_size) {
  if (width < 1 || height < 1) throw ContractError("select_grid: image dimensions must be >= 1");
  constexpr double kTie = 1e-12;
  const double area = static_cast<double>(width) * static_cast<double>(height);
  TileGrid best{1, 1};
  double best_d = std::abs(std::log(static_cast<double>(width)) - std::log(static_cast<double>(height)));
  for (const TileGrid& g : candidate_grids(max_tiles)) {
    // |log(w/h) - log(c/r)| written so that swapping (w,h) and (c,r) is exact.
    const double d = std::abs(std::log(static_cast<double>(width * g.rows)) -
                              std::log(static_cast<double>(height * g.cols)));
    if (d < best_d - kTie) {
      best = g;
      best_d = d;
      continue;
    }
    if (std::abs(d - best_d) > kTie) continue;
    // Tie. Candidates arrive in ascending tile count, so g.count() >= best.count().
    if (g.count() > best.count()) {
      const double ts = static_cast<double>(tile_size);
      if (tile_size > 0 && area > 0.5 * ts * ts * static_cast<double>(g.count())) best = g;
    } else if (g.cols > best.cols) {
      best = g;
    }
  }
  return best;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_w, std::size_t out_h) {
  if (out_w < 1 || out_h < 1) throw ContractError("resize_bilinear: output size must be >= 1");
  if (out_w == img.width && out_h == img.height) return img;
  ImageBuffer out(out_h, out_w, img.channels);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double max_x = static_cast<double>(img.width - 1);
  const double max_y = static_cast<double>(img.height - 1);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy_src = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy_src);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = fy_src - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx_src = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx_src);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = fx_src - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const double bot = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out.at(y, x, c) = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

TileSet segment(const ImageBuffer& img, std::size_t tile_size, std::size_t max_tiles, bool thumbnail) {
  if (tile_size < 2) throw ContractError("segment: tile_size must be >= 2");
  TileSet set;
  set.source_height = img.height;
  set.source_width = img.width;
  set.grid = select_grid(img.width, img.height, max_tiles, tile_size);
  const ImageBuffer resized =
      resize_bilinear(img, set.grid.cols * tile_size, set.grid.rows * tile_size);
  for (std::size_t r = 0; r < set.grid.rows; ++r) {
    for (std::size_t c = 0; c < set.grid.cols; ++c) {
      ImageBuffer tile(tile_size, tile_size, img.channels);
      for (std::size_t y = 0; y < tile_size; ++y) {
        const double* src = &resized.pixels[((r * tile_size + y) * resized.width + c * tile_size) * img.channels];
        std::copy_n(src, tile_size * img.channels, &tile.pixels[y * tile_size * img.channels]);
      }
      set.tiles.push_back(std::move(tile));
    }
  }
  if (thumbnail && set.grid.count() > 1) set.thumbnail = resize_bilinear(img, tile_size, tile_size);
  return set;
}

ImageBuffer reassemble(const TileSet& set) {
  if (set.tiles.empty()) throw ContractError("reassemble: no tiles");
  const std::size_t ts = set.tiles.front().width;
  const std::size_t ch = set.tiles.front().channels;
  ImageBuffer out(set.grid.rows * ts, set.grid.cols * ts, ch);
  for (std::size_t r = 0; r < set.grid.rows; ++r) {
    for (std::size_t c = 0; c < set.grid.cols; ++c) {
      const ImageBuffer& tile = set.tiles[r * set.grid.cols + c];
      for (std::size_t y = 0; y < ts; ++y) {
        std::copy_n(&tile.pixels[y * ts * ch], ts * ch, &out.pixels[((r * ts + y) * out.width + c * ts) * ch]);
      }
    }
  }
  return out;
}

TileSet normalize(const TileSet& set, std::span<const double> mean, std::span<const double> std) {
  TileSet out = set;
  auto apply = [&](ImageBuffer& img) {
    if (mean.size() != img.channels || std.size() != img.channels) {
      throw DimensionError("normalize: statistics for " + std::to_string(mean.size()) +
                           " channels, image has " + std::to_string(img.channels));
    }
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const std::size_t c = i % img.channels;
      img.pixels[i] = (img.pixels[i] - mean[c]) / std[c];
    }
  };
  for (double s : std) {
    if (s == 0.0) throw ContractError("normalize: zero standard deviation");
  }
  for (ImageBuffer& t : out.tiles) apply(t);
  if (out.thumbnail) apply(*out.thumbnail);
  return out;
}

}  // namespace duet
