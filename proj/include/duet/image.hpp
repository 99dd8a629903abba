// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace duet {

/// Row-major HWC float image, nominally in [0, 1].
struct ImageBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t h, std::size_t w, std::size_t c = 3, double fill = 0.0);

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const ImageBuffer&) const = default;
};

struct TileGrid {
  std::size_t cols = 1;
  std::size_t rows = 1;

  std::size_t count() const { return cols * rows; }
  bool operator==(const TileGrid&) const = default;
};

/// Tiles of one image in row-major grid order; the thumbnail, when present,
/// is the last patch.
struct TileSet {
  std::vector<ImageBuffer> tiles;
  TileGrid grid;
  std::optional<ImageBuffer> thumbnail;
  std::size_t source_height = 0;
  std::size_t source_width = 0;

  std::size_t patch_count() const { return tiles.size() + (thumbnail ? 1 : 0); }
  /// Tiles followed by the thumbnail.
  std::vector<const ImageBuffer*> patches() const;
};

/// All (cols, rows) with cols*rows <= max_tiles, ordered by tile count, then cols.
std::vector<TileGrid> candidate_grids(std::size_t max_tiles);

/// Grid whose aspect ratio is closest to width/height in log space.
/// Ties go to the grid with fewer tiles unless `tile_size` is given and the
/// image area exceeds half the larger grid's pixel area; remaining ties go to
/// the wider grid.
TileGrid select_grid(std::size_t width, std::size_t height, std::size_t max_tiles,
                     std::size_t tile_size = 0);

/// Bilinear resampling, half-pixel centres, edge clamped.
ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_w, std::size_t out_h);

TileSet segment(const ImageBuffer& img, std::size_t tile_size, std::size_t max_tiles, bool thumbnail);

/// Stitches the grid tiles back into the resized image.
ImageBuffer reassemble(const TileSet& tiles);

/// Per-channel (x - mean) / std on every patch.
TileSet normalize(const TileSet& tiles, std::span<const double> mean, std::span<const double> std);

// Binary P6 with maxval 255. Values map to and from [0, 1] by /255.
ImageBuffer read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);

}  // namespace duet
