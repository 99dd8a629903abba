// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <string_view>

#include "duet/errors.hpp"
#include "duet/rng.hpp"
#include "duet/trainer.hpp"

namespace duet {

bool matches_prefix(const std::string& name, const std::string& prefix) {
  return name.starts_with(prefix) && (name.size() == prefix.size() || name[prefix.size()] == '.');
}

void apply_freeze(const ParameterRefs& params, const std::vector<std::string>& frozen_prefixes) {
  for (Parameter* p : params) {
    p->frozen = false;
    for (const std::string& pre : frozen_prefixes) {
      if (matches_prefix(p->name, pre)) p->frozen = true;
    }
    p->tensor.set_requires_grad(!p->frozen);
    p->tensor.zero_grad();
  }
}

nlohmann::json MetricsRecord::to_json(bool with_wall) const {
  nlohmann::json j{{"step", step}, {"stage", stage}, {"lr", lr}, {"loss", loss}};
  if (with_wall) j["wall_ms"] = wall_ms;
  return j;
}

void MetricsLog::append(const MetricsRecord& r) {
  records_.push_back(r);
  if (sink_ != nullptr) *sink_ << r.to_json().dump() << '\n';
}

StageRunner::StageRunner(StagePlan plan, ParameterRefs params, AdamW& optimizer, std::size_t dataset_size,
                         std::uint64_t seed, BatchLoss loss_fn, std::size_t start_step)
    : plan_(std::move(plan)),
      params_(std::move(params)),
      opt_(optimizer),
      n_(dataset_size),
      seed_(seed),
      loss_fn_(std::move(loss_fn)),
      step_(start_step),
      start_(std::chrono::steady_clock::now()) {
  if (n_ == 0) throw ContractError("run_stage: empty dataset");
  if (plan_.batch_size == 0) throw ConfigError("run_stage: batch_size must be positive");
  apply_freeze(params_, plan_.frozen_prefixes);
}

std::vector<std::size_t> StageRunner::batch_indices(std::size_t step) const {
  const std::string_view name = plan_.name;
  const std::uint64_t salt = fnv1a({reinterpret_cast<const unsigned char*>(name.data()), name.size()});
  std::vector<std::size_t> out;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(n_);
  for (std::size_t k = step * plan_.batch_size; k < (step + 1) * plan_.batch_size; ++k) {
    const std::size_t epoch = k / n_;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(Rng::derive(Rng::derive(seed_, salt), epoch));
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[k % n_]);
  }
  return out;
}

MetricsRecord StageRunner::step() {
  MetricsRecord rec;
  rec.step = step_;
  rec.stage = plan_.name;
  rec.lr = cosine_lr(step_, plan_.base_lr, plan_.steps, plan_.warmup_steps);
  for (Parameter* p : params_) p->tensor.zero_grad();
  Tensor loss = loss_fn_(batch_indices(step_));
  rec.loss = loss.item();
  if (!std::isfinite(rec.loss)) {
    throw TrainingError(plan_.name + ": non-finite loss " + std::to_string(rec.loss) + " at step " +
                        std::to_string(step_));
  }
  backward(loss);
  opt_.step(params_, rec.lr);
  ++step_;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  return rec;
}

void StageRunner::run(MetricsLog& log) {
  while (!done()) log.append(step());
}

}  // namespace duet
