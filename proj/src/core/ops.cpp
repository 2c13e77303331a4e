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

#include "kgsc/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kgsc/core/error.hpp"
#include "kgsc/simd/kernels.hpp"

namespace kgsc {
namespace {

thread_local ComplexityScope* g_scope = nullptr;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShape, std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    fail(ErrorKind::kShape, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(x.shape()));
  }
}

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

}  // namespace

ComplexityScope::ComplexityScope() : previous_(g_scope) { g_scope = this; }
ComplexityScope::~ComplexityScope() { g_scope = previous_; }

void record_ops(std::uint64_t multiplications, std::uint64_t additions) {
  if (g_scope == nullptr) return;
  g_scope->counts_.multiplications += multiplications;
  g_scope->counts_.additions += additions;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  simd::axpy(out.size(), 1.0, b.values().data(), out.data());
  record_ops(0, out.size());
  return make_op(a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (auto* slot : in)
                     if (slot) simd::axpy(g.size(), 1.0, g.data(), slot->data());
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  simd::axpy(out.size(), -1.0, b.values().data(), out.data());
  return make_op(a.shape(), std::move(out), {a, b},
                 [](std::span<const double> g, std::span<std::vector<double>*> in) {
                   if (in[0]) simd::axpy(g.size(), 1.0, g.data(), in[0]->data());
                   if (in[1]) simd::axpy(g.size(), -1.0, g.data(), in[1]->data());
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b](std::span<const double> g, std::span<std::vector<double>*> in) {
                   const auto av = a.values();
                   const auto bv = b.values();
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (in[0]) (*in[0])[i] += g[i] * bv[i];
                     if (in[1]) (*in[1])[i] += g[i] * av[i];
                   }
                 });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= s;
  return make_op(a.shape(), std::move(out), {a},
                 [s](std::span<const double> g, std::span<std::vector<double>*> in) {
                   simd::axpy(g.size(), s, g.data(), in[0]->data());
                 });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  return make_op(x.shape(), std::move(out), {x},
                 [x, slope](std::span<const double> g, std::span<std::vector<double>*> in) {
                   const auto xv = x.values();
                   auto& gx = *in[0];
                   for (std::size_t i = 0; i < g.size(); ++i)
                     gx[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
                 });
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op(x.shape(), std::move(out), {x},
                 [y](std::span<const double> g, std::span<std::vector<double>*> in) {
                   auto& gx = *in[0];
                   for (std::size_t i = 0; i < g.size(); ++i)
                     gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
                 });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op(Shape{1}, {s}, {x},
                 [](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (double& v : *in[0]) v += g[0];
                 });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return mean(mul(d, d));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorKind::kShape,
         "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  return make_op(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {x},
                 [](std::span<const double> g, std::span<std::vector<double>*> in) {
                   simd::axpy(g.size(), 1.0, g.data(), in[0]->data());
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    fail(ErrorKind::kShape, "concat_cols: row counts of " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " differ");
  }
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1), d = da + db;
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.values().begin() + r * da, da, out.begin() + r * d);
    std::copy_n(b.values().begin() + r * db, db, out.begin() + r * d + da);
  }
  return make_op(Shape{n, d}, std::move(out), {a, b},
                 [n, da, db, d](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (std::size_t r = 0; r < n; ++r) {
                     if (in[0]) simd::axpy(da, 1.0, g.data() + r * d, in[0]->data() + r * da);
                     if (in[1]) simd::axpy(db, 1.0, g.data() + r * d + da, in[1]->data() + r * db);
                   }
                 });
}

Tensor concat_flat(std::span<const Tensor> parts) {
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t total = out.size();
  return make_op(Shape{total}, std::move(out), parts,
                 [offsets](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (std::size_t i = 0; i < in.size(); ++i) {
                     if (in[i]) simd::axpy(in[i]->size(), 1.0, g.data() + offsets[i], in[i]->data());
                   }
                 });
}

Tensor slice_flat(const Tensor& x, std::size_t offset, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (offset + n > x.numel()) {
    fail(ErrorKind::kShape, "slice_flat: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + n) + ") exceeds " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin() + offset, x.values().begin() + offset + n);
  return make_op(std::move(shape), std::move(out), {x},
                 [offset](std::span<const double> g, std::span<std::vector<double>*> in) {
                   simd::axpy(g.size(), 1.0, g.data(), in[0]->data() + offset);
                 });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) {
      fail(ErrorKind::kShape, "gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                                  shape_str(x.shape()));
    }
    std::copy_n(x.values().begin() + rows[i] * d, d, out.begin() + i * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_op(Shape{rows.size(), d}, std::move(out), {x},
                 [idx, d](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     simd::axpy(d, 1.0, g.data() + i * d, in[0]->data() + idx[i] * d);
                 });
}

Tensor upsample2x(const Tensor& x) {
  require_rank(x, 4, "upsample2x");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  const auto xv = x.values();
  std::vector<double> out(b * c * ho * wo);
  for (std::size_t plane = 0; plane < b * c; ++plane) {
    const double* src = xv.data() + plane * h * w;
    double* dst = out.data() + plane * ho * wo;
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) dst[y * wo + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_op(Shape{b, c, ho, wo}, std::move(out), {x},
                 [b, c, h, w](std::span<const double> g, std::span<std::vector<double>*> in) {
                   const std::size_t ho = 2 * h, wo = 2 * w;
                   for (std::size_t plane = 0; plane < b * c; ++plane) {
                     const double* src = g.data() + plane * ho * wo;
                     double* dst = in[0]->data() + plane * h * w;
                     for (std::size_t y = 0; y < ho; ++y)
                       for (std::size_t xx = 0; xx < wo; ++xx)
                         dst[(y / 2) * w + xx / 2] += src[y * wo + xx];
                   }
                 });
}

Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "fully_connected");
  require_rank(weight, 2, "fully_connected");
  const std::size_t rows = x.dim(0), d = x.dim(1), e = weight.dim(1);
  if (weight.dim(0) != d) {
    fail(ErrorKind::kShape, "fully_connected: input " + shape_str(x.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{e}) {
    fail(ErrorKind::kShape, "fully_connected: bias " + shape_str(bias.shape()) +
                                " does not match weight " + shape_str(weight.shape()));
  }
  std::vector<double> out(rows * e, 0.0);
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.values().begin(), bias.values().end(), out.begin() + r * e);
  }
  simd::gemm(rows, e, d, x.values().data(), d, 1, weight.values().data(), e, out.data(), e);
  record_ops(rows * d * e, rows * (d - 1) * e + (has_bias ? rows * e : 0));

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(
      Shape{rows, e}, std::move(out), inputs,
      [x, weight, rows, d, e](std::span<const double> g, std::span<std::vector<double>*> in) {
        if (in[0]) {
          const auto wt = transpose(weight.values().data(), d, e);
          simd::gemm(rows, d, e, g.data(), e, 1, wt.data(), d, in[0]->data(), d);
        }
        if (in[1]) simd::gemm(d, e, rows, x.values().data(), 1, d, g.data(), e, in[1]->data(), e);
        if (in.size() > 2 && in[2]) {
          for (std::size_t r = 0; r < rows; ++r) simd::axpy(e, 1.0, g.data() + r * e, in[2]->data());
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), e = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(rows * e);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * e;
    double* dst = out.data() + r * e;
    const double mx = *std::max_element(src, src + e);
    double z = 0.0;
    for (std::size_t j = 0; j < e; ++j) z += (dst[j] = std::exp(src[j] - mx));
    for (std::size_t j = 0; j < e; ++j) dst[j] /= z;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op(x.shape(), std::move(out), {x},
                 [y, rows, e](std::span<const double> g, std::span<std::vector<double>*> in) {
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* yr = y->data() + r * e;
                     const double* gr = g.data() + r * e;
                     const double inner = simd::dot(e, gr, yr);
                     double* dst = in[0]->data() + r * e;
                     for (std::size_t j = 0; j < e; ++j) dst[j] += yr[j] * (gr[j] - inner);
                   }
                 });
}

double log_loss(double p, int p_star) {
  if (!(p >= 0.0 && p <= 1.0)) {
    fail(ErrorKind::kDomain, "log_loss: probability " + std::to_string(p) + " outside [0, 1]");
  }
  const double q = std::clamp(p, kLogLossEps, 1.0 - kLogLossEps);
  return p_star == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double log_loss_grad(double p, int p_star) {
  if (p < kLogLossEps || p > 1.0 - kLogLossEps) return 0.0;
  return p_star == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

Tensor binary_log_loss(const Tensor& probs, std::span<const int> targets,
                       std::span<const std::uint8_t> mask) {
  if (targets.size() != probs.numel() || mask.size() != probs.numel()) {
    fail(ErrorKind::kShape, "binary_log_loss: " + std::to_string(targets.size()) +
                                " targets for probabilities " + shape_str(probs.shape()));
  }
  const auto pv = probs.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (mask[i]) total += log_loss(pv[i], targets[i]);
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return make_op(Shape{1}, {total}, {probs},
                 [probs, t, m](std::span<const double> g, std::span<std::vector<double>*> in) {
                   const auto pv = probs.values();
                   for (std::size_t i = 0; i < pv.size(); ++i)
                     if (m[i]) (*in[0])[i] += g[0] * log_loss_grad(pv[i], t[i]);
                 });
}

double smooth_l1_value(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

Tensor smooth_l1(const Tensor& t, const Tensor& t_star) {
  require_same_shape(t, t_star, "smooth_l1");
  const auto tv = t.values();
  const auto sv = t_star.values();
  double total = 0.0;
  for (std::size_t i = 0; i < tv.size(); ++i) total += smooth_l1_value(tv[i] - sv[i]);
  return make_op(Shape{1}, {total}, {t, t_star},
                 [t, t_star](std::span<const double> g, std::span<std::vector<double>*> in) {
                   const auto tv = t.values();
                   const auto sv = t_star.values();
                   for (std::size_t i = 0; i < tv.size(); ++i) {
                     const double x = tv[i] - sv[i];
                     const double d = std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
                     if (in[0]) (*in[0])[i] += g[0] * d;
                     if (in[1]) (*in[1])[i] -= g[0] * d;
                   }
                 });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), e = logits.dim(1);
  if (labels.size() != rows) {
    fail(ErrorKind::kShape, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for logits " + shape_str(logits.shape()));
  }
  const auto xv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(rows * e);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * e;
    double* dst = probs->data() + r * e;
    const double mx = *std::max_element(src, src + e);
    double z = 0.0;
    for (std::size_t j = 0; j < e; ++j) z += (dst[j] = std::exp(src[j] - mx));
    for (std::size_t j = 0; j < e; ++j) dst[j] /= z;
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= e) {
      fail(ErrorKind::kDomain, "softmax_cross_entropy: label " + std::to_string(labels[r]) +
                                   " out of range for " + std::to_string(e) + " classes");
    }
    total += -(src[labels[r]] - mx - std::log(z));
    ++count;
  }
  const double norm = count > 0 ? 1.0 / static_cast<double>(count) : 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  return make_op(Shape{1}, {total * norm}, {logits},
                 [probs, lab, rows, e, norm](std::span<const double> g,
                                             std::span<std::vector<double>*> in) {
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (lab[r] < 0) continue;
                     double* dst = in[0]->data() + r * e;
                     const double* pr = probs->data() + r * e;
                     for (std::size_t j = 0; j < e; ++j) dst[j] += g[0] * norm * pr[j];
                     dst[lab[r]] -= g[0] * norm;
                   }
                 });
}

}  // namespace kgsc
