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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kgsc/core/tensor.hpp"

namespace kgsc {

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor leaky_relu(const Tensor& x, double slope = 0.01);
Tensor sigmoid(const Tensor& x);

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

// --- layout -----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// [N, D1] ++ [N, D2] -> [N, D1 + D2]
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Flat concatenation of any tensors into shape [sum numel].
Tensor concat_flat(std::span<const Tensor> parts);
// Contiguous flat range [offset, offset + shape numel) reshaped to `shape`.
Tensor slice_flat(const Tensor& x, std::size_t offset, Shape shape);
// Rows of a [N, D] tensor.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Nearest-neighbour 2x upsampling of [B, C, H, W].
Tensor upsample2x(const Tensor& x);

// --- linear -----------------------------------------------------------------

// x[B, D] * weight[D, E] + bias[E]; bias may be undefined.
Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);

// Cross-correlation. weight is [Cout, Cin, K, K]; bias [Cout] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
// Transposed convolution, the adjoint of conv2d with the same geometry.
// weight is [Cin, Cout, K, K]; output side (H - 1) * stride - 2 * padding + K.
Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                std::size_t padding);

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

// --- losses -----------------------------------------------------------------

inline constexpr double kLogLossEps = 1e-7;

// -[t ln p + (1 - t) ln(1 - p)] with p clamped into (eps, 1 - eps).
// Throws kDomain when p lies outside [0, 1] before clamping.
double log_loss(double p, int p_star);
// d log_loss / dp; zero where the clamp is active.
double log_loss_grad(double p, int p_star);

// Sum of log_loss over entries whose mask is nonzero. targets in {0, 1}.
Tensor binary_log_loss(const Tensor& probs, std::span<const int> targets,
                       std::span<const std::uint8_t> mask);

// Sum over elements of 0.5 x^2 (|x| < 1) or |x| - 0.5, x = t - t_star.
Tensor smooth_l1(const Tensor& t, const Tensor& t_star);
double smooth_l1_value(double x);

// Mean multi-class log loss over rows whose label is >= 0.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// --- complexity accounting --------------------------------------------------

struct OpCounts {
  std::uint64_t multiplications = 0;
  std::uint64_t additions = 0;
};

// While alive, linear layers and elementwise additions executed on this thread
// add their exact arithmetic counts to counts().
class ComplexityScope {
 public:
  ComplexityScope();
  ~ComplexityScope();
  ComplexityScope(const ComplexityScope&) = delete;
  ComplexityScope& operator=(const ComplexityScope&) = delete;

  const OpCounts& counts() const { return counts_; }

 private:
  friend void record_ops(std::uint64_t, std::uint64_t);

  OpCounts counts_;
  ComplexityScope* previous_;
};

void record_ops(std::uint64_t multiplications, std::uint64_t additions);

}  // namespace kgsc
