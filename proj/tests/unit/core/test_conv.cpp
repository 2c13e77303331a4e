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

#include "doctest.h"
#include "gradcheck.hpp"
#include "kgsc/core/error.hpp"
#include "kgsc/core/layers.hpp"
#include "kgsc/core/ops.hpp"

using namespace kgsc;
using kgsc::testing::gradcheck;
using kgsc::testing::random_param;

namespace {

// Direct nested-loop cross-correlation, independent of im2col/GEMM.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b,
                               std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * O * Ho * Wo, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = b.defined() ? b[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                  continue;
                acc += x[((n * C + c) * H + iy) * W + ix] * w[((o * C + c) * K + ky) * K + kx];
              }
          out[((n * O + o) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d identity-scaling kernel") {
  const Tensor x({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  const Tensor w({1, 1, 1, 1}, {2.0});
  const Tensor y = conv2d(x, w, Tensor(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.values()) CHECK(v == 2.0);
}

TEST_CASE("conv2d output shape follows the stride formula") {
  Rng rng(1);
  const Tensor y =
      conv2d(random_param({1, 3, 8, 8}, rng), random_param({16, 3, 3, 3}, rng), Tensor(), 2, 1);
  CHECK(y.shape() == Shape{1, 16, 4, 4});
}

TEST_CASE("conv2d matches a direct cross-correlation oracle") {
  Rng rng(7);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const Tensor x = random_param({2, 2, 5, 5}, rng);
      const Tensor w = random_param({3, 2, 3, 3}, rng);
      const Tensor b = random_param({3}, rng);
      const Tensor y = conv2d(x, w, b, stride, pad);
      const auto ref = naive_conv(x, w, b, stride, pad);
      REQUIRE(ref.size() == y.numel());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-10);
    }
  }
}

TEST_CASE("conv2d rejects channel mismatches with both shapes in the message") {
  Rng rng(1);
  try {
    conv2d(random_param({1, 3, 8, 8}, rng), random_param({4, 2, 3, 3}, rng), Tensor(), 1, 1);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
    const std::string msg = e.what();
    CHECK(msg.find("(1,3,8,8)") != std::string::npos);
    CHECK(msg.find("(4,2,3,3)") != std::string::npos);
  }
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(5);
  const Tensor w = random_param({3, 2, 3, 3}, rng);
  const Tensor x = random_param({1, 2, 6, 6}, rng), z = random_param({1, 2, 6, 6}, rng);
  const double a = 0.7, b = -1.3;
  const Tensor lhs = conv2d(add(scale(x, a), scale(z, b)), w, Tensor(), 2, 1);
  const Tensor rhs =
      add(scale(conv2d(x, w, Tensor(), 2, 1), a), scale(conv2d(z, w, Tensor(), 2, 1), b));
  for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(std::abs(lhs[i] - rhs[i]) < 1e-10);
}

TEST_CASE("deconv2d shape and identity examples") {
  Rng rng(2);
  const Tensor y =
      deconv2d(random_param({1, 2, 4, 4}, rng), random_param({2, 3, 2, 2}, rng), Tensor(), 2, 0);
  CHECK(y.shape() == Shape{1, 3, 8, 8});

  const Tensor x = random_param({1, 1, 4, 4}, rng);
  const Tensor id = deconv2d(x, Tensor({1, 1, 1, 1}, {1.0}), Tensor(), 1, 0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id[i] == x[i]);
}

TEST_CASE("deconv2d rejects a non-positive output size") {
  Rng rng(2);
  CHECK_THROWS_AS(
      deconv2d(random_param({1, 1, 1, 1}, rng), random_param({1, 1, 1, 1}, rng), Tensor(), 1, 1),
      Error);
}

TEST_CASE("deconv2d equals the input gradient of a conv2d inner product") {
  Rng rng(9);
  // H = 8, K = 4, stride 2, pad 1 divides evenly, so deconv maps 4x4 back to 8x8.
  const Tensor w = random_param({3, 2, 4, 4}, rng);
  const Tensor u = random_param({1, 2, 8, 8}, rng);
  const Tensor y = random_param({1, 3, 4, 4}, rng).detach();
  backward(sum(mul(conv2d(u, w, Tensor(), 2, 1), y)));
  const Tensor d = deconv2d(y, w, Tensor(), 2, 1);
  REQUIRE(d.shape() == u.shape());
  for (std::size_t i = 0; i < d.numel(); ++i) CHECK(std::abs(d[i] - u.grad()[i]) < 1e-12);
}

TEST_CASE("conv2d and deconv2d are adjoint") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_param({4, 3, 3, 3}, rng);
    const Tensor x = random_param({2, 3, 9, 9}, rng);
    const Tensor cx = conv2d(x, w, Tensor(), 2, 1);
    const Tensor y = random_param(cx.shape(), rng);
    const Tensor dy = deconv2d(y, w, Tensor(), 2, 1);
    REQUIRE(dy.shape() == x.shape());
    CHECK(std::abs(inner(cx, y) - inner(x, dy)) < 1e-8);
  }
}

TEST_CASE("conv and deconv gradients match finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor x = random_param({2, 2, 5, 5}, rng);
    const Tensor w = random_param({3, 2, 3, 3}, rng);
    const Tensor b = random_param({3}, rng);
    const Tensor probe = random_param({2, 3, 3, 3}, rng).detach();
    CHECK(gradcheck([&] { return sum(mul(conv2d(x, w, b, 2, 1), probe)); }, {x, w, b}) < 1e-4);

    const Tensor xd = random_param({1, 3, 3, 3}, rng);
    const Tensor wd = random_param({3, 2, 4, 4}, rng);
    const Tensor bd = random_param({2}, rng);
    const Tensor probe_d = random_param({1, 2, 6, 6}, rng).detach();
    CHECK(gradcheck([&] { return sum(mul(deconv2d(xd, wd, bd, 2, 1), probe_d)); }, {xd, wd, bd}) <
          1e-4);
  }
}

TEST_CASE("residual block examples") {
  Rng rng(4);
  ParameterStore ps;
  const ResidualSpec spec{4, 4, 1};
  init_residual_block(ps, "rb", spec, rng);

  SUBCASE("zero input with a zeroed inner path gives zero") {
    for (const char* name : {"rb.conv1.w", "rb.conv1.b", "rb.conv2.w", "rb.conv2.b"}) {
      ps.assign(name, std::vector<double>(ps.get(name).numel(), 0.0));
    }
    const Tensor y = residual_block(ps, "rb", spec, Tensor({1, 4, 8, 8}));
    for (double v : y.values()) CHECK(v == 0.0);
  }
  SUBCASE("stride-1 block preserves shape") {
    const Tensor y = residual_block(ps, "rb", spec, random_param({1, 4, 8, 8}, rng));
    CHECK(y.shape() == Shape{1, 4, 8, 8});
  }
  SUBCASE("equals a hand-composed conv / activation / add sequence") {
    const Tensor x = random_param({1, 4, 6, 6}, rng);
    const Tensor y = residual_block(ps, "rb", spec, x);
    const Tensor h = leaky_relu(conv2d(x, ps.get("rb.conv1.w"), ps.get("rb.conv1.b"), 1, 1), 0.01);
    const Tensor o = leaky_relu(
        add(conv2d(h, ps.get("rb.conv2.w"), ps.get("rb.conv2.b"), 1, 1), x), 0.01);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - o[i]) < 1e-12);
  }
  SUBCASE("channel mismatch is a structured error") {
    CHECK_THROWS_AS(residual_block(ps, "rb", spec, random_param({1, 3, 8, 8}, rng)), Error);
  }
}

TEST_CASE("projected residual block gradients match finite differences") {
  Rng rng(8);
  ParameterStore ps;
  const ResidualSpec spec{2, 3, 2};
  init_residual_block(ps, "rb", spec, rng);
  const Tensor x = random_param({1, 2, 6, 6}, rng);
  const Tensor probe = random_param({1, 3, 3, 3}, rng).detach();
  std::vector<Tensor> inputs{x};
  for (const auto& [name, t] : ps) inputs.push_back(t);
  CHECK(gradcheck([&] { return sum(mul(residual_block(ps, "rb", spec, x), probe)); }, inputs) <
        1e-4);
}

TEST_CASE("complexity scope counts conv arithmetic exactly") {
  Rng rng(1);
  ParameterStore ps;
  init_conv(ps, "c", {3, 16, 3, 1, 1}, rng);
  CHECK(ps.scalar_count() == 448);
  ComplexityScope scope;
  apply_conv(ps, "c", {3, 16, 3, 1, 1}, Tensor({1, 3, 8, 8}));
  // 16 * 3 * 9 products for each of 16 * 64 outputs; 26 accumulations + 1 bias each.
  CHECK(scope.counts().multiplications == 16u * 3 * 9 * 64);
  CHECK(scope.counts().additions == 16u * 64 * 27);
}
