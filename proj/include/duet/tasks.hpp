// SPDX-License-Identifier: Apache-2.0
#pragma once

// Seeded synthetic visual question answering tasks and their reference oracles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "duet/image.hpp"

namespace duet {

enum class TaskKind { tile_detail, complementary };

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::complementary;
  std::size_t image_width = 32;
  std::size_t image_height = 32;
  std::size_t tile_size = 32;
  std::size_t n_classes = 16;
  std::size_t n_train = 2000;
  std::size_t n_eval = 500;
  std::uint64_t seed = 7;
  // Patch sizes of the coarse (A) and fine (B) branches; the complementary
  // task is built so that shape lives at the A scale and texture at the B scale.
  std::size_t patch_a = 4;
  std::size_t patch_b = 2;

  /// Throws ConfigError when the geometry cannot express the task.
  void validate() const;
};

struct Sample {
  std::vector<ImageBuffer> images;
  std::string question;
  std::string answer;
  std::size_t label = 0;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

Dataset generate(const TaskSpec& spec);

// ---- complementary: label = shape * 4 + texture ---------------------------

inline constexpr std::size_t kShapes = 4;
inline constexpr std::size_t kTextures = 4;  // vertical, horizontal, checker, none

struct ComplementaryParams {
  std::size_t shape = 0;
  std::size_t texture = 0;
  std::size_t offset_x = 0;  // in A-patch blocks
  std::size_t offset_y = 0;
  std::array<int, 3> background{};
  std::array<int, 3> foreground{};
  int amplitude = 0;
};

/// Pixel values are multiples of 1/255, so the image survives a PPM round trip.
ImageBuffer render_complementary(const TaskSpec& spec, const ComplementaryParams& p);
Dataset generate_complementary(const TaskSpec& spec);

/// Full-resolution reference classifier (block means for shape, the sign
/// pattern inside fine patches for texture).
std::size_t complementary_oracle(const TaskSpec& spec, const ImageBuffer& img);

/// Frequency-content check: re-rendering with another texture leaves every
/// A-patch mean unchanged, and re-rendering with another shape leaves every
/// B-patch mean-removed residual unchanged. Returns the number of violations.
std::size_t complementary_frequency_violations(const TaskSpec& spec, const ComplementaryParams& p);

// ---- tile-detail: glyph class at a named grid cell ------------------------

inline constexpr std::size_t kGlyphClasses = 8;
inline constexpr std::size_t kGlyphCells = 3;   // glyph is kGlyphCells x kGlyphCells blocks
inline constexpr std::size_t kGlyphBlock = 4;   // pixels per glyph block
inline constexpr std::size_t kGlyphOffset = 8;  // glyph origin inside its cell

/// 3x3 on/off pattern of a glyph class, row-major.
const std::array<std::uint8_t, 9>& glyph_pattern(std::size_t cls);

/// "On" glyph blocks carry +amplitude on even rows and -amplitude on odd rows
/// around the background, so the class is visible at full resolution but a
/// 2x vertical bilinear downscale (the no-tiling view and the thumbnail)
/// averages it away exactly.
struct TileDetailParams {
  std::size_t cols = 3;
  std::size_t rows = 2;
  std::vector<std::size_t> classes;  // one per cell, row-major
  std::array<int, 3> background{};
  std::vector<std::array<int, 3>> colors;  // per-cell amplitude per channel
};

ImageBuffer render_tile_detail(const TaskSpec& spec, const TileDetailParams& p);
Dataset generate_tile_detail(const TaskSpec& spec);
/// "r{row}c{col}"
std::string cell_question(std::size_t row, std::size_t col);
/// Nearest-template match on the full-resolution cell named by the question.
std::size_t tile_detail_oracle(const TaskSpec& spec, const ImageBuffer& img, const std::string& question);

/// Answer string for a class id ('a' + id).
std::string class_answer(std::size_t label);

// ---- dataset files: JSON-lines index + PPM images --------------------------

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
/// Reads train.jsonl / eval.jsonl written by write_dataset. The spec is read
/// from spec.json.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace duet
