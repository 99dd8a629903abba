// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "duet/kernels.hpp"

namespace duet::kernels {

#if defined(DUET_HAVE_AVX2_KERNELS)
const KernelTable& avx2_kernels();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(DUET_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* resolve(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  if (name == "auto" || name.empty()) {
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
  }
  return nullptr;
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable* avx2_table() {
#if defined(DUET_HAVE_AVX2_KERNELS)
  static const bool supported = cpu_has_avx2();
  if (supported) return &avx2_kernels();
#endif
  return nullptr;
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t) return *t;
  const char* env = std::getenv("DUET_KERNELS");
  t = resolve(env ? std::string_view(env) : std::string_view("auto"));
  if (!t) t = resolve("auto");
  g_active.store(t, std::memory_order_release);
  return *t;
}

bool select(std::string_view name) {
  const KernelTable* t = resolve(name);
  if (!t) return false;
  g_active.store(t, std::memory_order_release);
  return true;
}

}  // namespace duet::kernels
