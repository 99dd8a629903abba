// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration, the two-stage training run, evaluation and the
// ablation matrix.

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "duet/model.hpp"
#include "duet/tasks.hpp"
#include "duet/trainer.hpp"

namespace duet {

struct StageSettings {
  std::size_t steps = 100;
  double lr = 4e-4;
  double weight_decay = 0.01;
  std::optional<std::size_t> warmup_steps;  // default: 3% of steps
};

struct TrainSettings {
  bool freeze_encoders = true;
  std::size_t batch_size = 16;
  // When false, stage 1 also freezes projector A and only projector B trains.
  bool stage1_train_projector_a = true;
  StageSettings stage1;
  StageSettings stage2;
};

struct ExperimentConfig {
  std::string id = "run";
  std::uint64_t seed = 0;
  TaskSpec task;
  std::string data_dir;  // read the dataset from here instead of generating it
  ModelConfig model;
  TrainSettings train;
  std::size_t eval_max_new = 4;

  /// Desk defaults: complementary task, both encoders, post-interleave fusion.
  static ExperimentConfig desk();
  StagePlan plan(int stage) const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Rejects unknown keys (all of them are listed in the error) and wrong types
/// with ConfigError. Missing keys keep their desk defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets `value` at a dotted path ("model.fusion"). The path must exist.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value);

/// Training/eval state for one experiment: the model, its dataset and the
/// frozen-encoder feature cache.
class Session {
 public:
  Session(const ExperimentConfig& cfg, Dataset data);

  const ExperimentConfig& config() const { return cfg_; }
  HybridModel& model() { return *model_; }
  const Dataset& data() const { return data_; }

  /// Encoder features are reused across steps only while caching is on;
  /// turning it off drops the cache.
  void set_feature_cache(bool on);

  /// Mean loss over training samples.
  Tensor batch_loss(const std::vector<std::size_t>& indices);
  /// Greedy exact-match accuracy on the eval split.
  double evaluate();
  /// Decoded answer for one sample (EOS and anything after it removed).
  std::string answer(const Sample& s);

  StageRunner make_runner(int stage, AdamW& optimizer, std::size_t start_step = 0);
  nlohmann::json checkpoint_meta(int stage, std::size_t next_step) const;
  std::string config_hash() const;

 private:
  const std::vector<ImageFeatures>& features(bool train, std::size_t index);
  std::vector<ImageFeatures> encode(const Sample& s) const;

  ExperimentConfig cfg_;
  Dataset data_;
  std::unique_ptr<HybridModel> model_;
  bool cache_on_ = true;
  std::vector<std::optional<std::vector<ImageFeatures>>> train_cache_;
  std::vector<std::optional<std::vector<ImageFeatures>>> eval_cache_;
};

struct ReportRow {
  std::string config_id;
  std::string encoders;
  std::string fusion;
  std::string tiling;
  std::string frozen;
  double accuracy = 0.0;
  std::size_t encoder_tokens_per_tile = 0;
  std::size_t fused_tokens_per_tile = 0;
  std::size_t visual_tokens_per_image = 0;
  std::size_t train_steps = 0;
  std::string status = "ok";
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

struct AblationReport {
  std::vector<ReportRow> rows;

  bool complete() const;
  /// Fixed column order; wall time is left out so equal runs give equal bytes.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct RunOptions {
  std::filesystem::path out_dir;     // empty: write nothing
  std::ostream* progress = nullptr;  // one line per stage/eval
};

struct ExperimentResult {
  ReportRow row;
  std::vector<MetricsRecord> metrics;
  Checkpoint checkpoint;
};

Dataset load_or_generate(const ExperimentConfig& cfg);
/// Stage 1, stage 2, then evaluation.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});
ExperimentResult run_experiment(const ExperimentConfig& cfg, Dataset data, const RunOptions& opts);

struct MatrixCell {
  std::string id;
  ExperimentConfig config;
};

/// Matrix file: {"id", "base": path-or-object, "cells": [{"id", "config": path?, "overrides": {dotted: value}}]}.
/// Relative paths resolve against the matrix file's directory.
std::vector<MatrixCell> load_matrix(const std::filesystem::path& path);
std::vector<MatrixCell> parse_matrix(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Runs every cell in order. A failing cell gets a "failed: ..." status and
/// the remaining cells still run.
AblationReport ablate(const std::vector<MatrixCell>& cells, const RunOptions& opts = {});

}  // namespace duet
