// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "duet/errors.hpp"
#include "duet/rng.hpp"
#include "duet/tasks.hpp"

namespace duet {
namespace {

constexpr std::size_t kShapeBlocks = 4;

// 4x4 block templates, row-major.
constexpr std::array<std::array<const char*, 4>, kShapes> kShapeTemplates{{
    {"####", "####", "####", "####"},
    {".##.", "####", "####", ".##."},
    {"####", "#..#", "#..#", "####"},
    {"##..", "###.", ".###", "..##"},
}};

constexpr std::array<std::array<std::uint8_t, 9>, kGlyphClasses> kGlyphs{{
    {1, 1, 0, 1, 1, 0, 0, 0, 0},
    {0, 1, 1, 0, 1, 1, 0, 0, 0},
    {0, 0, 0, 1, 1, 0, 1, 1, 0},
    {0, 0, 0, 0, 1, 1, 0, 1, 1},
    {1, 0, 1, 0, 0, 0, 1, 0, 1},
    {0, 1, 0, 1, 0, 1, 0, 1, 0},
    {1, 0, 0, 0, 1, 0, 0, 1, 1},
    {0, 0, 1, 0, 1, 0, 1, 1, 0},
}};

int level(const ImageBuffer& img, std::size_t y, std::size_t x, std::size_t c) {
  return static_cast<int>(std::lround(img.at(y, x, c) * 255.0));
}

void put(ImageBuffer& img, std::size_t y, std::size_t x, std::size_t c, int v) {
  img.at(y, x, c) = static_cast<double>(v) / 255.0;
}

int texture_sign(std::size_t texture, std::size_t x, std::size_t y) {
  switch (texture) {
    case 0: return x % 2 == 0 ? 1 : -1;
    case 1: return y % 2 == 0 ? 1 : -1;
    case 2: return (x + y) % 2 == 0 ? 1 : -1;
    default: return 0;
  }
}

bool shape_on(std::size_t shape, std::size_t by, std::size_t bx) { return kShapeTemplates[shape][by][bx] == '#'; }

std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % classes;
  rng.shuffle(labels);
  return labels;
}

std::array<int, 3> tinted(Rng& rng, int lo, int hi, int tint) {
  const int base = lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
  std::array<int, 3> out{};
  for (int& c : out) c = base - tint + static_cast<int>(rng.below(static_cast<std::size_t>(2 * tint + 1)));
  return out;
}

// Offsets keep the shape one block away from the border when there is room.
std::pair<std::size_t, std::size_t> offset_range(const TaskSpec& spec) {
  const std::size_t slack = spec.image_width / spec.patch_a - kShapeBlocks;
  const std::size_t margin = slack / 4;
  return {margin, slack - margin};
}

}  // namespace

const char* to_string(TaskKind k) { return k == TaskKind::tile_detail ? "tile-detail" : "complementary"; }

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "tile-detail") return TaskKind::tile_detail;
  if (s == "complementary") return TaskKind::complementary;
  throw ConfigError("unknown task kind '" + s + "' (expected tile-detail|complementary)");
}

void TaskSpec::validate() const {
  auto fail = [&](const std::string& what) { throw ConfigError(std::string("task ") + to_string(kind) + ": " + what); };
  if (image_width == 0 || image_height == 0 || tile_size == 0) fail("sizes must be positive");
  if (n_train == 0 || n_eval == 0) fail("n_train and n_eval must be positive");
  if (kind == TaskKind::complementary) {
    if (n_classes != kShapes * kTextures) fail("n_classes must be " + std::to_string(kShapes * kTextures));
    if (image_width != tile_size || image_height != tile_size) fail("images must be exactly one tile");
    if (patch_b < 2 || patch_b % 2 != 0 || patch_a % patch_b != 0 || patch_a <= patch_b) {
      fail("patch sizes " + std::to_string(patch_a) + "/" + std::to_string(patch_b) +
           " do not separate the shape and texture frequencies");
    }
    if (image_width % patch_a != 0 || image_width / patch_a < kShapeBlocks) fail("image too small for the shapes");
  } else {
    if (n_classes == 0 || n_classes > kGlyphClasses) fail("n_classes must be in 1.." + std::to_string(kGlyphClasses));
    if (image_width % tile_size != 0 || image_height % tile_size != 0) fail("image must be a whole number of tiles");
    const std::size_t cells = (image_width / tile_size) * (image_height / tile_size);
    if (cells < 2) fail("needs more than one tile");
    if (kGlyphOffset + kGlyphCells * kGlyphBlock > tile_size) fail("glyph does not fit in a tile");
    // Glyph blocks alternate sign row by row. An even vertical downscale
    // factor averages each row pair with equal weights, which cancels them.
    if ((image_height / tile_size) % 2 != 0) fail("glyph survives the thumbnail downscale (odd vertical factor)");
    if (kGlyphBlock % 2 != 0 || kGlyphOffset % 2 != 0) fail("glyph rows must come in pairs");
  }
}

std::string class_answer(std::size_t label) { return std::string(1, static_cast<char>('a' + label)); }

Dataset generate(const TaskSpec& spec) {
  return spec.kind == TaskKind::complementary ? generate_complementary(spec) : generate_tile_detail(spec);
}

// ---- complementary ----------------------------------------------------------

ImageBuffer render_complementary(const TaskSpec& spec, const ComplementaryParams& p) {
  ImageBuffer img(spec.image_height, spec.image_width, 3);
  for (std::size_t y = 0; y < spec.image_height; ++y) {
    for (std::size_t x = 0; x < spec.image_width; ++x) {
      const std::size_t by = y / spec.patch_a;
      const std::size_t bx = x / spec.patch_a;
      const bool inside = by >= p.offset_y && by < p.offset_y + kShapeBlocks && bx >= p.offset_x &&
                          bx < p.offset_x + kShapeBlocks;
      const bool on = inside && shape_on(p.shape, by - p.offset_y, bx - p.offset_x);
      const int tex = p.amplitude * texture_sign(p.texture, x, y);
      for (std::size_t c = 0; c < 3; ++c) put(img, y, x, c, (on ? p.foreground[c] : p.background[c]) + tex);
    }
  }
  return img;
}

Dataset generate_complementary(const TaskSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const auto [lo, hi] = offset_range(spec);
  auto make = [&](std::size_t n, std::uint64_t salt) {
    Rng rng(Rng::derive(spec.seed, salt));
    const auto labels = balanced_labels(n, spec.n_classes, rng);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      ComplementaryParams p;
      p.shape = labels[i] / kTextures;
      p.texture = labels[i] % kTextures;
      p.offset_x = lo + rng.below(hi - lo + 1);
      p.offset_y = lo + rng.below(hi - lo + 1);
      p.background = tinted(rng, 40, 90, 8);
      p.foreground = tinted(rng, 150, 200, 8);
      p.amplitude = 16 + static_cast<int>(rng.below(17));
      Sample s;
      s.images.push_back(render_complementary(spec, p));
      s.question = "What is shown?";
      s.label = labels[i];
      s.answer = class_answer(labels[i]);
      out.push_back(std::move(s));
    }
    return out;
  };
  ds.train = make(spec.n_train, 1);
  ds.eval = make(spec.n_eval, 2);
  return ds;
}

std::size_t complementary_oracle(const TaskSpec& spec, const ImageBuffer& img) {
  const std::size_t pa = spec.patch_a;
  const std::size_t gw = img.width / pa;
  const std::size_t gh = img.height / pa;
  std::vector<long> sums(gw * gh, 0);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) sums[(y / pa) * gw + x / pa] += level(img, y, x, c);
    }
  }
  const auto [mn, mx] = std::minmax_element(sums.begin(), sums.end());
  const long threshold = (*mn + *mx) / 2;
  std::size_t best_shape = 0;
  std::size_t best_score = 0;
  for (std::size_t s = 0; s < kShapes; ++s) {
    for (std::size_t oy = 0; oy + kShapeBlocks <= gh; ++oy) {
      for (std::size_t ox = 0; ox + kShapeBlocks <= gw; ++ox) {
        std::size_t score = 0;
        for (std::size_t by = 0; by < gh; ++by) {
          for (std::size_t bx = 0; bx < gw; ++bx) {
            const bool inside = by >= oy && by < oy + kShapeBlocks && bx >= ox && bx < ox + kShapeBlocks;
            const bool want = inside && shape_on(s, by - oy, bx - ox);
            score += (sums[by * gw + bx] > threshold) == want;
          }
        }
        if (score > best_score) {
          best_score = score;
          best_shape = s;
        }
      }
    }
  }
  // The texture is the residual sign pattern of any fine patch.
  const int p00 = level(img, 0, 0, 0);
  const int p01 = level(img, 0, 1, 0);
  const int p10 = level(img, 1, 0, 0);
  std::size_t texture = 3;
  if (p00 == p10 && p00 != p01) {
    texture = 0;
  } else if (p00 == p01 && p00 != p10) {
    texture = 1;
  } else if (p00 != p01) {
    texture = 2;
  }
  return best_shape * kTextures + texture;
}

std::size_t complementary_frequency_violations(const TaskSpec& spec, const ComplementaryParams& p) {
  auto coarse = [&](const ImageBuffer& img) {
    const std::size_t pa = spec.patch_a;
    const std::size_t gw = img.width / pa;
    std::vector<long> sums(gw * (img.height / pa) * 3, 0);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) sums[((y / pa) * gw + x / pa) * 3 + c] += level(img, y, x, c);
      }
    }
    return sums;
  };
  auto fine = [&](const ImageBuffer& img) {
    const std::size_t pb = spec.patch_b;
    const long area = static_cast<long>(pb * pb);
    std::vector<long> residual(img.pixels.size());
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          long sum = 0;
          const std::size_t y0 = y / pb * pb;
          const std::size_t x0 = x / pb * pb;
          for (std::size_t dy = 0; dy < pb; ++dy) {
            for (std::size_t dx = 0; dx < pb; ++dx) sum += level(img, y0 + dy, x0 + dx, c);
          }
          residual[(y * img.width + x) * 3 + c] = area * level(img, y, x, c) - sum;
        }
      }
    }
    return residual;
  };
  const ImageBuffer ref = render_complementary(spec, p);
  const auto ref_coarse = coarse(ref);
  const auto ref_fine = fine(ref);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < kTextures; ++t) {
    ComplementaryParams q = p;
    q.texture = t;
    violations += coarse(render_complementary(spec, q)) != ref_coarse;
  }
  for (std::size_t s = 0; s < kShapes; ++s) {
    ComplementaryParams q = p;
    q.shape = s;
    violations += fine(render_complementary(spec, q)) != ref_fine;
  }
  return violations;
}

// ---- tile-detail --------------------------------------------------------------

const std::array<std::uint8_t, 9>& glyph_pattern(std::size_t cls) { return kGlyphs.at(cls); }

std::string cell_question(std::size_t row, std::size_t col) {
  return "r" + std::to_string(row) + "c" + std::to_string(col);
}

ImageBuffer render_tile_detail(const TaskSpec& spec, const TileDetailParams& p) {
  ImageBuffer img(spec.image_height, spec.image_width, 3);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) put(img, y, x, c, p.background[c]);
    }
  }
  const std::size_t cw = spec.image_width / p.cols;
  const std::size_t ch = spec.image_height / p.rows;
  for (std::size_t r = 0; r < p.rows; ++r) {
    for (std::size_t col = 0; col < p.cols; ++col) {
      const std::size_t cell = r * p.cols + col;
      const auto& pat = glyph_pattern(p.classes[cell]);
      for (std::size_t by = 0; by < kGlyphCells; ++by) {
        for (std::size_t bx = 0; bx < kGlyphCells; ++bx) {
          if (!pat[by * kGlyphCells + bx]) continue;
          const std::size_t y0 = r * ch + kGlyphOffset + by * kGlyphBlock;
          const std::size_t x0 = col * cw + kGlyphOffset + bx * kGlyphBlock;
          for (std::size_t y = y0; y < y0 + kGlyphBlock; ++y) {
            const int sign = y % 2 == 0 ? 1 : -1;
            for (std::size_t x = x0; x < x0 + kGlyphBlock; ++x) {
              for (std::size_t c = 0; c < 3; ++c) put(img, y, x, c, p.background[c] + sign * p.colors[cell][c]);
            }
          }
        }
      }
    }
  }
  return img;
}

Dataset generate_tile_detail(const TaskSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const std::size_t cols = spec.image_width / spec.tile_size;
  const std::size_t rows = spec.image_height / spec.tile_size;
  auto make = [&](std::size_t n, std::uint64_t salt) {
    Rng rng(Rng::derive(spec.seed, salt));
    const auto labels = balanced_labels(n, spec.n_classes, rng);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      TileDetailParams p;
      p.cols = cols;
      p.rows = rows;
      p.background = tinted(rng, 100, 150, 10);
      for (std::size_t k = 0; k < cols * rows; ++k) {
        p.classes.push_back(rng.below(spec.n_classes));
        p.colors.push_back(tinted(rng, 45, 75, 10));
      }
      const std::size_t asked = rng.below(cols * rows);
      p.classes[asked] = labels[i];
      Sample s;
      s.images.push_back(render_tile_detail(spec, p));
      s.question = cell_question(asked / cols, asked % cols);
      s.label = labels[i];
      s.answer = class_answer(labels[i]);
      out.push_back(std::move(s));
    }
    return out;
  };
  ds.train = make(spec.n_train, 1);
  ds.eval = make(spec.n_eval, 2);
  return ds;
}

std::size_t tile_detail_oracle(const TaskSpec& spec, const ImageBuffer& img, const std::string& question) {
  std::size_t row = 0;
  std::size_t col = 0;
  if (std::sscanf(question.c_str(), "r%zuc%zu", &row, &col) != 2) {
    throw ContractError("tile_detail_oracle: cannot parse question '" + question + "'");
  }
  const std::size_t cw = spec.tile_size;
  const std::size_t y_cell = row * cw;
  const std::size_t x_cell = col * cw;
  std::array<std::uint8_t, 9> seen{};
  for (std::size_t by = 0; by < kGlyphCells; ++by) {
    for (std::size_t bx = 0; bx < kGlyphCells; ++bx) {
      const std::size_t y = y_cell + kGlyphOffset + by * kGlyphBlock;
      const std::size_t x = x_cell + kGlyphOffset + bx * kGlyphBlock + 1;
      int diff = 0;
      for (std::size_t c = 0; c < 3; ++c) diff += std::abs(level(img, y, x, c) - level(img, y + 1, x, c));
      seen[by * kGlyphCells + bx] = diff > 90;
    }
  }
  std::size_t best = 0;
  std::size_t best_dist = 10;
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    std::size_t dist = 0;
    for (std::size_t i = 0; i < 9; ++i) dist += seen[i] != kGlyphs[k][i];
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

}  // namespace duet
