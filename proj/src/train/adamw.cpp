// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "duet/errors.hpp"
#include "duet/kernels.hpp"
#include "duet/trainer.hpp"

namespace duet {

void adamw_step(std::span<double> p, std::span<const double> g, AdamW::Moments& state, std::uint64_t t,
                double lr, const AdamWConfig& cfg) {
  if (g.size() != p.size()) {
    throw DimensionError("adamw: gradient size " + std::to_string(g.size()) + " != parameter size " +
                         std::to_string(p.size()));
  }
  if (state.m.empty()) {
    state.m.assign(p.size(), 0.0);
    state.v.assign(p.size(), 0.0);
  }
  if (state.m.size() != p.size() || state.v.size() != p.size()) {
    throw DimensionError("adamw: moment size " + std::to_string(state.m.size()) + " != parameter size " +
                         std::to_string(p.size()));
  }
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  kernels::active().adamw(p.size(), p.data(), g.data(), state.m.data(), state.v.data(), lr, cfg.beta1, cfg.beta2,
                          cfg.eps, cfg.weight_decay, bias1, bias2);
}

void AdamW::step(const ParameterRefs& params, double lr) {
  ++t_;
  for (Parameter* p : params) {
    if (p->frozen || !p->tensor.has_grad()) continue;
    adamw_step(p->tensor.mutable_data(), p->tensor.grad(), moments_[p->name], t_, lr, cfg_);
  }
}

}  // namespace duet
