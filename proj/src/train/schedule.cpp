// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "duet/trainer.hpp"

namespace duet {

double cosine_lr(std::size_t step, double base_lr, std::size_t total_steps, std::size_t warmup_steps) {
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

std::size_t default_warmup(std::size_t steps) { return (steps * 3) / 100; }

StagePlan StagePlan::stage1(std::size_t steps, double lr, double wd) {
  StagePlan p;
  p.name = "stage1";
  p.frozen_prefixes = {"encoderA", "encoderB", "lm"};
  p.base_lr = lr;
  p.weight_decay = wd;
  p.steps = steps;
  p.warmup_steps = default_warmup(steps);
  return p;
}

StagePlan StagePlan::stage2(std::size_t steps, double lr, double wd) {
  StagePlan p;
  p.name = "stage2";
  p.frozen_prefixes = {"encoderA", "encoderB"};
  p.base_lr = lr;
  p.weight_decay = wd;
  p.steps = steps;
  p.warmup_steps = default_warmup(steps);
  return p;
}

}  // namespace duet
