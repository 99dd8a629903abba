// SPDX-License-Identifier: Apache-2.0
#include "duet/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "duet/errors.hpp"

namespace duet {

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_grad: eps must be positive");
  NoGradGuard no_grad;
  std::vector<double> out(x.numel());
  auto xd = x.mutable_data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + eps;
    const double fp = f(x);
    xd[i] = orig - eps;
    const double fm = f(x);
    xd[i] = orig;
    out[i] = (fp - fm) / (2.0 * eps);
  }
  return Tensor::from(x.shape(), std::move(out));
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace duet
