// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "duet/errors.hpp"
#include "duet/kernels.hpp"
#include "duet/tensor.hpp"

namespace duet {
namespace {

using detail::Node;

[[noreturn]] void dim_error(const char* op, const std::string& what) {
  throw DimensionError(std::string(op) + ": " + what);
}

// Gradient buffer of parent `i` if it takes part in the reverse pass.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

const std::vector<double>& parent_data(Node& self, std::size_t i) { return self.parents[i]->data; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool batched = sa.size() == 3 && sb.size() == 3;
  if (!(batched || (sa.size() == 2 && sb.size() == 2))) {
    dim_error("matmul", "expected 2-D or batched 3-D operands, got " + shape_str(sa) + " and " +
                            shape_str(sb));
  }
  const std::size_t B = batched ? sa[0] : 1;
  const std::size_t M = sa[sa.size() - 2];
  const std::size_t K = sa[sa.size() - 1];
  const std::size_t N = sb[sb.size() - 1];
  if (sb[sb.size() - 2] != K || (batched && sb[0] != B)) {
    dim_error("matmul", "incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const auto& kt = kernels::active();
  std::vector<double> out(B * M * N, 0.0);
  for (std::size_t bi = 0; bi < B; ++bi) {
    kt.gemm_nn(M, N, K, a.data().data() + bi * M * K, b.data().data() + bi * K * N,
               out.data() + bi * M * N);
  }
  Shape shape = batched ? Shape{B, M, N} : Shape{M, N};
  return make_result("matmul", std::move(shape), std::move(out), {a, b},
                     [B, M, N, K](Node& self) {
                       const auto& kt = kernels::active();
                       const double* dc = self.grad.data();
                       const double* A = parent_data(self, 0).data();
                       const double* Bm = parent_data(self, 1).data();
                       if (double* da = parent_grad(self, 0)) {
                         for (std::size_t bi = 0; bi < B; ++bi) {
                           kt.gemm_nt(M, K, N, dc + bi * M * N, Bm + bi * K * N, da + bi * M * K);
                         }
                       }
                       if (double* db = parent_grad(self, 1)) {
                         for (std::size_t bi = 0; bi < B; ++bi) {
                           kt.gemm_tn(K, N, M, A + bi * M * K, dc + bi * M * N, db + bi * K * N);
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const std::size_t n = self.grad.size();
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  const Shape& sa = a.shape();
  const Shape& sb = bias.shape();
  bool ok = sb.size() <= sa.size();
  for (std::size_t i = 0; ok && i < sb.size(); ++i) ok = sa[sa.size() - sb.size() + i] == sb[i];
  if (!ok) {
    dim_error("add_rowwise",
              "bias " + shape_str(sb) + " does not match trailing dims of " + shape_str(sa));
  }
  const std::size_t N = bias.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i % N];
  return make_result("add_rowwise", sa, std::move(out), {a, bias}, [N](Node& self) {
    const std::size_t n = self.grad.size();
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i % N] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = parent_data(self, 0);
    const auto& y = parent_data(self, 1);
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return make_result("mul-scalar", a.shape(), std::move(out), {a}, [s](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    dim_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) dim_error("reshape", "zero-sized dimension in " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  const std::size_t R = in.size();
  if (axes.size() != R) {
    dim_error("permute", "axes length " + std::to_string(axes.size()) + " for " + shape_str(in));
  }
  std::vector<bool> seen(R, false);
  for (std::size_t ax : axes) {
    if (ax >= R || seen[ax]) dim_error("permute", "invalid axis order for " + shape_str(in));
    seen[ax] = true;
  }
  std::vector<std::size_t> in_strides(R, 1);
  for (std::size_t i = R; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(R);
  std::vector<std::size_t> src_stride(R);
  for (std::size_t i = 0; i < R; ++i) {
    out_shape[i] = in[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  // map[out_flat] = in_flat
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(R, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t d = R; d-- > 0;) {
      ++idx[d];
      src += src_stride[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto ad = a.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = ad[map[o]];
  return make_result("permute", std::move(out_shape), std::move(out), {a},
                     [map = std::move(map)](Node& self) {
                       if (double* g = parent_grad(self, 0)) {
                         for (std::size_t o = 0; o < map.size(); ++o) g[map[o]] += self.grad[o];
                       }
                     });
}

Tensor softmax_lastdim(const Tensor& a, bool causal) {
  const Shape& s = a.shape();
  const std::size_t N = s.back();
  if (causal && (s.size() < 2 || s[s.size() - 2] != N)) {
    dim_error("softmax-lastdim", "causal mask needs square trailing dims, got " + shape_str(s));
  }
  const std::size_t rows = a.numel() / N;
  std::vector<double> out(a.numel(), 0.0);
  const auto ad = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t width = causal ? (r % N) + 1 : N;
    const double* x = ad.data() + r * N;
    double* y = out.data() + r * N;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < width; ++j) y[j] *= inv;
  }
  return make_result("softmax-lastdim", s, std::move(out), {a}, [N, rows, causal](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    const double* y = self.data.data();
    const double* dy = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t width = causal ? (r % N) + 1 : N;
      const std::size_t off = r * N;
      double d = 0.0;
      for (std::size_t j = 0; j < width; ++j) d += dy[off + j] * y[off + j];
      for (std::size_t j = 0; j < width; ++j) g[off + j] += y[off + j] * (dy[off + j] - d);
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t D = x.shape().back();
  if (gamma.numel() != D || beta.numel() != D) {
    dim_error("layernorm", "gamma/beta " + shape_str(gamma.shape()) + "/" +
                               shape_str(beta.shape()) + " vs input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / D;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_sigma(rows);
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * D;
    double mu = 0.0;
    for (std::size_t j = 0; j < D; ++j) mu += xr[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t j = 0; j < D; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * D + j] = h;
      out[r * D + j] = h * gd[j] + bd[j];
    }
  }
  return make_result(
      "layernorm", x.shape(), std::move(out), {x, gamma, beta},
      [D, rows, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& self) {
        const double* dy = self.grad.data();
        const auto& gd = parent_data(self, 1);
        double* dx = parent_grad(self, 0);
        double* dg = parent_grad(self, 1);
        double* db = parent_grad(self, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t off = r * D;
          if (dg || db) {
            for (std::size_t j = 0; j < D; ++j) {
              if (dg) dg[j] += dy[off + j] * xhat[off + j];
              if (db) db[j] += dy[off + j];
            }
          }
          if (dx) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t j = 0; j < D; ++j) {
              const double dh = dy[off + j] * gd[j];
              m1 += dh;
              m2 += dh * xhat[off + j];
            }
            m1 /= static_cast<double>(D);
            m2 /= static_cast<double>(D);
            for (std::size_t j = 0; j < D; ++j) {
              const double dh = dy[off + j] * gd[j];
              dx[off + j] += inv_sigma[r] * (dh - m1 - xhat[off + j] * m2);
            }
          }
        }
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * ad[i] * (1.0 + std::erf(ad[i] * kInvSqrt2));
  }
  return make_result("gelu", a.shape(), std::move(out), {a}, [](Node& self) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    double* g = parent_grad(self, 0);
    if (!g) return;
    const auto& x = parent_data(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      g[i] += self.grad[i] * (cdf + x[i] * pdf);
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) dim_error("embedding-lookup", "table must be 2-D, got " + shape_str(table.shape()));
  if (ids.empty()) dim_error("embedding-lookup", "empty id list");
  const std::size_t V = table.dim(0);
  const std::size_t D = table.dim(1);
  std::vector<double> out(ids.size() * D);
  const auto td = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= V) {
      dim_error("embedding-lookup",
                "id " + std::to_string(ids[r]) + " out of range for table " + shape_str(table.shape()));
    }
    std::copy_n(td.data() + ids[r] * D, D, out.data() + r * D);
  }
  return make_result("embedding-lookup", {ids.size(), D}, std::move(out), {table},
                     [D, rows = std::vector<std::size_t>(ids.begin(), ids.end())](Node& self) {
                       double* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                         for (std::size_t j = 0; j < D; ++j) g[rows[r] * D + j] += self.grad[r * D + j];
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) dim_error("concat-along-axis", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) dim_error("concat-along-axis", "axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      dim_error("concat-along-axis",
                "shape " + shape_str(s) + " incompatible with " + shape_str(first) + " on axis " +
                    std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(outer * out_row);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t w = t.shape()[axis] * inner;
    const auto td = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(td.data() + o * w, w, out.data() + o * out_row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return make_result("concat-along-axis", std::move(out_shape), std::move(out), parts,
                     [outer, out_row, widths = std::move(widths)](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         const std::size_t w = widths[p];
                         if (double* g = parent_grad(self, p)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * out_row + off;
                             double* dst = g + o * w;
                             for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                           }
                         }
                         off += w;
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    dim_error("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                           std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * w);
  const auto ad = a.data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(ad.data() + o * in_row + off, w, out.data() + o * w);
  return make_result("slice", std::move(out_shape), std::move(out), {a},
                     [outer, in_row, w, off](Node& self) {
                       double* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t j = 0; j < w; ++j) g[o * in_row + off + j] += self.grad[o * w + j];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    double* g = parent_grad(self, 0);
    if (!g) return;
    const double d = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += d;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    dim_error("cross-entropy", "logits " + shape_str(logits.shape()) + " vs " +
                                   std::to_string(targets.size()) + " targets");
  }
  const std::size_t T = logits.dim(0);
  const std::size_t V = logits.dim(1);
  const auto ld = logits.data();
  std::vector<double> probs(T * V);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (targets[t] >= V) dim_error("cross-entropy", "target id out of range");
    const double* x = ld.data() + t * V;
    const double mx = *std::max_element(x, x + V);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      probs[t * V + j] = std::exp(x[j] - mx);
      z += probs[t * V + j];
    }
    for (std::size_t j = 0; j < V; ++j) probs[t * V + j] /= z;
    total += (mx + std::log(z)) - x[targets[t]];
  }
  const double inv_t = 1.0 / static_cast<double>(T);
  return make_result("cross-entropy", {1}, {total * inv_t}, {logits},
                     [T, V, inv_t, probs = std::move(probs),
                      tg = std::vector<std::size_t>(targets.begin(), targets.end())](Node& self) {
                       double* g = parent_grad(self, 0);
                       if (!g) return;
                       const double d = self.grad[0] * inv_t;
                       for (std::size_t t = 0; t < T; ++t) {
                         for (std::size_t j = 0; j < V; ++j) {
                           const double onehot = j == tg[t] ? 1.0 : 0.0;
                           g[t * V + j] += d * (probs[t * V + j] - onehot);
                         }
                       }
                     });
}

}  // namespace duet
