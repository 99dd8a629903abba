// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense f64 inner loops. Every routine has a scalar reference implementation;
// SIMD variants are picked once at startup from the host CPU features and can
// be pinned with DUET_KERNELS=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace duet::kernels {

struct KernelTable {
  const char* name;
  // C[M,N] += A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                  double* C);
  // C[M,N] += A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                  double* C);
  // C[M,N] += A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                  double* C);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // Decoupled-weight-decay Adam update over one parameter buffer.
  void (*adamw)(std::size_t n, double* p, const double* g, double* m, double* v, double lr,
                double beta1, double beta2, double eps, double weight_decay, double bias1,
                double bias2);
};

const KernelTable& scalar_table();

/// The AVX2/FMA table, or nullptr when it was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();

/// Table used by tensor ops. Resolved on first call.
const KernelTable& active();

/// Force a table by name ("scalar", "avx2", "auto"). Returns false if unavailable.
bool select(std::string_view name);

}  // namespace duet::kernels
