// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "duet/nn.hpp"

namespace duet {

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
double cosine_lr(std::size_t step, double base_lr, std::size_t total_steps, std::size_t warmup_steps);

/// Warmup length used when a plan does not set one: 3% of the steps.
std::size_t default_warmup(std::size_t steps);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with decoupled decay (p <- p * (1 - lr*wd) before the Adam update).
/// Moments are kept per parameter name. Frozen parameters and parameters
/// without a gradient are left untouched.
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParameterRefs& params, double lr);

  const AdamWConfig& config() const { return cfg_; }
  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Single update on raw buffers. Throws DimensionError on size mismatch.
void adamw_step(std::span<double> p, std::span<const double> g, AdamW::Moments& state, std::uint64_t t,
                double lr, const AdamWConfig& cfg);

struct StagePlan {
  std::string name = "stage1";
  std::vector<std::string> frozen_prefixes;
  double base_lr = 4e-4;
  double weight_decay = 0.01;
  std::size_t steps = 100;
  std::size_t warmup_steps = 3;
  std::size_t batch_size = 8;

  /// Encoders and LM frozen; projectors (and any fusion map) train.
  static StagePlan stage1(std::size_t steps, double lr = 4e-4, double wd = 0.01);
  /// Encoders frozen; projectors and LM train.
  static StagePlan stage2(std::size_t steps, double lr = 4e-5, double wd = 0.01);
};

/// True if `name` equals `prefix` or continues it with a '.'.
bool matches_prefix(const std::string& name, const std::string& prefix);

/// Marks parameters frozen per the plan and turns off their gradient.
void apply_freeze(const ParameterRefs& params, const std::vector<std::string>& frozen_prefixes);

struct MetricsRecord {
  std::size_t step = 0;
  std::string stage;
  double lr = 0.0;
  double loss = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json(bool with_wall = true) const;
  bool same_values(const MetricsRecord& o) const {
    return step == o.step && stage == o.stage && lr == o.lr && loss == o.loss;
  }
};

/// Collects records and optionally appends them to a JSON-lines stream.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(std::ostream* sink) : sink_(sink) {}
  void append(const MetricsRecord& r);
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::ostream* sink_ = nullptr;
  std::vector<MetricsRecord> records_;
};

/// Float32 snapshot of parameters (and optionally Adam moments).
struct Checkpoint {
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;  // in floats
    std::size_t count = 0;
  };

  nlohmann::json meta;  // config_hash, stage, step, adam_steps
  std::vector<Entry> entries;
  std::vector<float> blob;

  /// Rounds live parameters and moments to float32 in place, then records
  /// them, so a run continuing from memory matches one resumed from disk.
  static Checkpoint capture(const ParameterRefs& params, AdamW* optimizer, nlohmann::json meta);
  /// Copies the snapshot into matching parameters (by name) and moments.
  /// Throws ContractError on a missing name or shape mismatch.
  void restore(const ParameterRefs& params, AdamW* optimizer) const;

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);
  nlohmann::json manifest() const;
};

/// Computes the mean training loss for a batch of dataset indices.
using BatchLoss = std::function<Tensor(const std::vector<std::size_t>& indices)>;

/// Executes a plan step by step. Sample order is a seeded per-epoch shuffle,
/// so step k always sees the same batch for a given (seed, plan name).
class StageRunner {
 public:
  StageRunner(StagePlan plan, ParameterRefs params, AdamW& optimizer, std::size_t dataset_size,
              std::uint64_t seed, BatchLoss loss_fn, std::size_t start_step = 0);

  std::size_t next_step() const { return step_; }
  bool done() const { return step_ >= plan_.steps; }
  const StagePlan& plan() const { return plan_; }
  std::vector<std::size_t> batch_indices(std::size_t step) const;
  /// Runs one step and returns its record. Throws TrainingError on a
  /// non-finite loss.
  MetricsRecord step();
  void run(MetricsLog& log);

 private:
  StagePlan plan_;
  ParameterRefs params_;
  AdamW& opt_;
  std::size_t n_;
  std::uint64_t seed_;
  BatchLoss loss_fn_;
  std::size_t step_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace duet
