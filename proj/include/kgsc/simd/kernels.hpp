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

// Dense double-precision inner loops with a portable scalar reference and
// hand-vectorized variants. The active table is chosen once at startup from
// CPU features; KGSC_SIMD=scalar|avx2 overrides the choice.

#pragma once

#include <cstddef>
#include <string_view>

namespace kgsc::simd {

enum class Isa { kScalar, kAvx2 };

// C += A * B where A is m x k addressed as a[i * a_rs + p * a_cs],
// B is row-major k x n with leading dimension ldb, C is row-major m x n.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        std::size_t a_rs, std::size_t a_cs, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc);
using DotFn = double (*)(std::size_t n, const double* x, const double* y);
// y += alpha * x
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x, double* y);

struct KernelTable {
  Isa isa;
  std::string_view name;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
};

const KernelTable& scalar_kernels();

// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();

const KernelTable& active();

// Forces a table for the rest of the process (tests, benchmarks).
void set_active(Isa isa);

inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t a_rs,
                 std::size_t a_cs, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  active().gemm(m, n, k, a, a_rs, a_cs, b, ldb, c, ldc);
}
inline double dot(std::size_t n, const double* x, const double* y) {
  return active().dot(n, x, y);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active().axpy(n, alpha, x, y);
}

}  // namespace kgsc::simd
