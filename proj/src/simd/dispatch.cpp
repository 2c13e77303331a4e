// Copyright 2026 The kgsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <string_view>

#include "kgsc/simd/kernels.hpp"

#if defined(KGSC_HAVE_AVX2)
namespace kgsc::simd::avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs,
          std::size_t a_cs, const double* b, std::size_t ldb, double* c, std::size_t ldc);
double dot(std::size_t n, const double* x, const double* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
}  // namespace kgsc::simd::avx2
#endif

namespace kgsc::simd {
namespace {

bool cpu_has_avx2() {
#if defined(KGSC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  const char* env = std::getenv("KGSC_SIMD");
  const std::string_view want = env != nullptr ? env : "";
  if (want == "scalar") return &scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable*& current() {
  static const KernelTable* table = pick_default();
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(KGSC_HAVE_AVX2)
  static const KernelTable table{Isa::kAvx2, "avx2", &avx2::gemm, &avx2::dot, &avx2::axpy};
  static const bool supported = cpu_has_avx2();
  return supported ? &table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current(); }

void set_active(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const KernelTable* t = avx2_kernels()) {
      current() = t;
      return;
    }
  }
  current() = &scalar_kernels();
}

}  // namespace kgsc::simd
