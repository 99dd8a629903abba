// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "duet/tensor.hpp"

namespace duet {

/// Central-difference estimate of d f / d x, one element at a time:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). `x` is perturbed in place and
/// restored bit-exactly; `f` runs with graph recording disabled.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor x,
                              double eps = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

}  // namespace duet
