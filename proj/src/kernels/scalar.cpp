// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "duet/kernels.hpp"

namespace duet::kernels {
namespace {

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = A[i * K + k];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      C[i * N + j] += s;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const double* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const double a = A[k * M + i];
      double* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

double dot(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void adamw(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
           double beta1, double beta2, double eps, double weight_decay, double bias1,
           double bias2) {
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bias1;
    const double vhat = v[i] / bias2;
    p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", gemm_nn, gemm_nt, gemm_tn, dot, axpy, adamw};
  return table;
}

}  // namespace duet::kernels
