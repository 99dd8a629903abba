// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "duet/kernels.hpp"

namespace duet::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// c[0..N) += sum_k a[k*astride] * B[k, 0..N)
inline void row_update(std::size_t N, std::size_t K, const double* a, std::size_t astride,
                       const double* B, double* c) {
  std::size_t j = 0;
  for (; j + 16 <= N; j += 16) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    __m256d c1 = _mm256_loadu_pd(c + j + 4);
    __m256d c2 = _mm256_loadu_pd(c + j + 8);
    __m256d c3 = _mm256_loadu_pd(c + j + 12);
    for (std::size_t k = 0; k < K; ++k) {
      const __m256d av = _mm256_set1_pd(a[k * astride]);
      const double* b = B + k * N + j;
      c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b), c0);
      c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + 4), c1);
      c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + 8), c2);
      c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + 12), c3);
    }
    _mm256_storeu_pd(c + j, c0);
    _mm256_storeu_pd(c + j + 4, c1);
    _mm256_storeu_pd(c + j + 8, c2);
    _mm256_storeu_pd(c + j + 12, c3);
  }
  for (; j + 4 <= N; j += 4) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    for (std::size_t k = 0; k < K; ++k) {
      c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[k * astride]), _mm256_loadu_pd(B + k * N + j), c0);
    }
    _mm256_storeu_pd(c + j, c0);
  }
  for (; j < N; ++j) {
    double s = c[j];
    for (std::size_t k = 0; k < K; ++k) s += a[k * astride] * B[k * N + j];
    c[j] = s;
  }
}

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < M; ++i) row_update(N, K, A + i * K, 1, B, C + i * N);
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) C[i * N + j] += dot(K, A + i * K, B + j * K);
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < M; ++i) row_update(N, K, A + i, M, B, C + i * N);
}

void axpy(std::size_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void adamw(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
           double beta1, double beta2, double eps, double weight_decay, double bias1,
           double bias2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d inv_bias1 = _mm256_set1_pd(1.0 / bias1);
  const __m256d inv_bias2 = _mm256_set1_pd(1.0 / bias2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d decay = _mm256_set1_pd(1.0 - lr * weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(ob1, gi));
    const __m256d vi =
        _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(ob2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_mul_pd(mi, inv_bias1);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv_bias2)), veps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(p + i), decay), step));
  }
  if (i < n) {
    scalar_table().adamw(n - i, p + i, g + i, m + i, v + i, lr, beta1, beta2, eps, weight_decay,
                         bias1, bias2);
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{"avx2", gemm_nn, gemm_nt, gemm_tn, dot, axpy, adamw};
  return table;
}

}  // namespace duet::kernels
