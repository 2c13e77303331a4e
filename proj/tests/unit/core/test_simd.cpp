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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "kgsc/core/rng.hpp"
#include "kgsc/simd/kernels.hpp"

using kgsc::Rng;
namespace simd = kgsc::simd;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  return worst;
}

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop") {
  Rng rng(3);
  const std::size_t m = 5, n = 7, k = 4;
  const auto a = randv(m * k, rng), b = randv(k * n, rng);
  std::vector<double> c(m * n, 0.5), ref(m * n, 0.5);
  simd::scalar_kernels().gemm(m, n, k, a.data(), k, 1, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  CHECK(max_rel(c, ref) < 1e-14);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const simd::KernelTable* fast = simd::avx2_kernels();
  if (fast == nullptr) {
    MESSAGE("AVX2 variant unavailable on this host; skipping equivalence check");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  Rng rng(11);
  // Odd sizes hit every tile remainder path.
  for (std::size_t m : {1u, 3u, 4u, 9u, 17u}) {
    for (std::size_t n : {1u, 5u, 8u, 13u, 33u}) {
      for (std::size_t k : {1u, 2u, 7u, 64u}) {
        for (bool transposed_a : {false, true}) {
          const auto a = randv(m * k, rng), b = randv(k * n, rng), c0 = randv(m * n, rng);
          const std::size_t rs = transposed_a ? 1 : k, cs = transposed_a ? m : 1;
          auto c1 = c0, c2 = c0;
          ref.gemm(m, n, k, a.data(), rs, cs, b.data(), n, c1.data(), n);
          fast->gemm(m, n, k, a.data(), rs, cs, b.data(), n, c2.data(), n);
          REQUIRE(max_rel(c1, c2) < 1e-12);
        }
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 100u, 1001u}) {
    const auto x = randv(n, rng), y = randv(n, rng);
    CHECK(std::abs(ref.dot(n, x.data(), y.data()) - fast->dot(n, x.data(), y.data())) < 1e-12);
    auto y1 = y, y2 = y;
    ref.axpy(n, 0.37, x.data(), y1.data());
    fast->axpy(n, 0.37, x.data(), y2.data());
    CHECK(max_rel(y1, y2) < 1e-15);
  }
}

TEST_CASE("dispatch can be forced to scalar and back") {
  simd::set_active(simd::Isa::kScalar);
  CHECK(simd::active().isa == simd::Isa::kScalar);
  simd::set_active(simd::Isa::kAvx2);
  if (simd::avx2_kernels() != nullptr) CHECK(simd::active().isa == simd::Isa::kAvx2);
}
