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

#include <algorithm>
#include <memory>
#include <string>

#include "kgsc/core/error.hpp"
#include "kgsc/core/ops.hpp"
#include "kgsc/simd/kernels.hpp"

namespace kgsc {
namespace {

struct Geometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox * stride - padding + kx lies
// inside [0, width).
std::pair<std::size_t, std::size_t> valid_span(std::size_t out_w, std::size_t width,
                                               std::size_t stride, std::size_t padding,
                                               std::size_t kx) {
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
  // smallest ox with ox*s + off >= 0
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  // smallest ox with ox*s + off >= width
  std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(width) - off + s - 1) / s;
  lo = std::min<std::ptrdiff_t>(lo, static_cast<std::ptrdiff_t>(out_w));
  hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(out_w));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Patch matrix [C*K*K, Ho*Wo] of a C x H x W image.
void im2col(const double* img, const Geometry& g, double* cols) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        const auto [lo, hi] = valid_span(g.out_w, g.width, g.stride, g.padding, kx);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          std::fill_n(dst, lo, 0.0);
          std::fill(dst + hi, dst + g.out_w, 0.0);
          const double* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width +
                              (lo * g.stride + kx - g.padding);
          if (g.stride == 1) {
            std::copy_n(src, hi - lo, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[(ox - lo) * g.stride];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters a patch matrix back into the image (+=).
void col2im(const double* cols, const Geometry& g, double* img) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        const auto [lo, hi] = valid_span(g.out_w, g.width, g.stride, g.padding, kx);
        if (lo >= hi) continue;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width +
                        (lo * g.stride + kx - g.padding);
          const double* src = row + oy * g.out_w + lo;
          if (g.stride == 1) {
            simd::axpy(hi - lo, 1.0, src, dst);
          } else {
            for (std::size_t ox = 0; ox < hi - lo; ++ox) dst[ox * g.stride] += src[ox];
          }
        }
      }
    }
  }
}

std::vector<double> transpose(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.defined() && bias.shape() != Shape{channels}) {
    fail(ErrorKind::kShape, std::string(op) + ": bias " + shape_str(bias.shape()) +
                                " does not match " + std::to_string(channels) + " output channels");
  }
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  if (stride == 0) fail(ErrorKind::kDomain, "convolution stride must be positive");
  if (k > in + 2 * padding) {
    fail(ErrorKind::kShape, "kernel " + std::to_string(k) + " exceeds padded extent " +
                                std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4 || weight.dim(2) != weight.dim(3) ||
      weight.dim(1) != input.dim(1)) {
    fail(ErrorKind::kShape, "conv2d: input " + shape_str(input.shape()) +
                                " incompatible with weight " + shape_str(weight.shape()));
  }
  const std::size_t batch = input.dim(0), cout = weight.dim(0);
  Geometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), stride, padding, 0, 0};
  g.out_h = conv_out_size(g.height, g.kernel, stride, padding);
  g.out_w = conv_out_size(g.width, g.kernel, stride, padding);
  check_bias(bias, cout, "conv2d");

  const std::size_t rows = g.rows(), ncols = g.cols();
  const std::size_t in_plane = g.channels * g.height * g.width, out_plane = cout * ncols;
  auto cols = std::shared_ptr<double[]>(new double[batch * rows * ncols]);
  std::vector<double> out(batch * out_plane, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double* cb = cols.get() + b * rows * ncols;
    im2col(input.values().data() + b * in_plane, g, cb);
    double* ob = out.data() + b * out_plane;
    if (bias.defined())
      for (std::size_t o = 0; o < cout; ++o) std::fill_n(ob + o * ncols, ncols, bias[o]);
    simd::gemm(cout, ncols, rows, weight.values().data(), rows, 1, cb, ncols, ob, ncols);
  }
  const std::uint64_t mults = static_cast<std::uint64_t>(batch) * out_plane * rows;
  record_ops(mults, mults - batch * out_plane + (bias.defined() ? batch * out_plane : 0));

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      Shape{batch, cout, g.out_h, g.out_w}, std::move(out), inputs,
      [cols, weight, g, batch, cout](std::span<const double> grad,
                                     std::span<std::vector<double>*> in) {
        const std::size_t rows = g.rows(), ncols = g.cols();
        const std::size_t in_plane = g.channels * g.height * g.width, out_plane = cout * ncols;
        std::vector<double> dcols;
        if (in[0]) dcols.resize(rows * ncols);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gb = grad.data() + b * out_plane;
          const double* cb = cols.get() + b * rows * ncols;
          if (in[0]) {
            std::fill(dcols.begin(), dcols.end(), 0.0);
            simd::gemm(rows, ncols, cout, weight.values().data(), 1, rows, gb, ncols, dcols.data(),
                       ncols);
            col2im(dcols.data(), g, in[0]->data() + b * in_plane);
          }
          if (in[1]) {
            // dW^T = cols * dOut^T streams the patch matrix once.
            const auto gt = transpose(gb, cout, ncols);
            std::vector<double> dwt(rows * cout, 0.0);
            simd::gemm(rows, cout, ncols, cb, ncols, 1, gt.data(), cout, dwt.data(), cout);
            double* dw = in[1]->data();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t o = 0; o < cout; ++o) dw[o * rows + r] += dwt[r * cout + o];
          }
          if (in.size() > 2 && in[2]) {
            for (std::size_t o = 0; o < cout; ++o) {
              double s = 0.0;
              for (std::size_t j = 0; j < ncols; ++j) s += gb[o * ncols + j];
              (*in[2])[o] += s;
            }
          }
        }
      });
}

Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4 || weight.dim(2) != weight.dim(3) ||
      weight.dim(0) != input.dim(1)) {
    fail(ErrorKind::kShape, "deconv2d: input " + shape_str(input.shape()) +
                                " incompatible with weight " + shape_str(weight.shape()));
  }
  if (stride == 0) fail(ErrorKind::kDomain, "deconv2d: stride must be positive");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(1), k = weight.dim(2);
  const auto out_size = [&](std::size_t n) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>((n - 1) * stride + k) -
                             2 * static_cast<std::ptrdiff_t>(padding);
    if (s <= 0) {
      fail(ErrorKind::kShape, "deconv2d: computed output size " + std::to_string(s) +
                                  " for input " + shape_str(input.shape()));
    }
    return static_cast<std::size_t>(s);
  };
  const std::size_t ho = out_size(h), wo = out_size(w);
  check_bias(bias, cout, "deconv2d");

  // The output plays the role of a conv input whose patch matrix has h*w columns.
  const Geometry g{cout, ho, wo, k, stride, padding, h, w};
  const std::size_t rows = g.rows(), ncols = h * w;
  const std::size_t in_plane = cin * ncols, out_plane = cout * ho * wo;
  std::vector<double> out(batch * out_plane, 0.0);
  std::vector<double> cols(rows * ncols);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(cols.begin(), cols.end(), 0.0);
    simd::gemm(rows, ncols, cin, weight.values().data(), 1, rows,
               input.values().data() + b * in_plane, ncols, cols.data(), ncols);
    double* ob = out.data() + b * out_plane;
    col2im(cols.data(), g, ob);
    if (bias.defined()) {
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t j = 0; j < ho * wo; ++j) ob[o * ho * wo + j] += bias[o];
    }
  }
  {
    // Products are dense (every input times every tap); additions count only
    // in-range contributions beyond the first per output, plus bias.
    std::vector<std::uint32_t> hits(ho * wo, 0);
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                      static_cast<std::ptrdiff_t>(padding);
            const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(x * stride + kx) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (oy >= 0 && ox >= 0 && oy < static_cast<std::ptrdiff_t>(ho) &&
                ox < static_cast<std::ptrdiff_t>(wo))
              ++hits[static_cast<std::size_t>(oy) * wo + static_cast<std::size_t>(ox)];
          }
    std::uint64_t taps = 0, touched = 0;
    for (std::uint32_t n : hits) {
      taps += n;
      touched += n > 0;
    }
    const std::uint64_t mults = static_cast<std::uint64_t>(batch) * cout * cin * k * k * h * w;
    const std::uint64_t adds = static_cast<std::uint64_t>(batch) * cout * (cin * taps - touched) +
                               (bias.defined() ? static_cast<std::uint64_t>(batch) * out_plane : 0);
    record_ops(mults, adds);
  }

  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op(
      Shape{batch, cout, ho, wo}, std::move(out), inputs,
      [input, weight, g, batch, cin, cout](std::span<const double> grad,
                                           std::span<std::vector<double>*> in) {
        const std::size_t rows = g.rows(), ncols = g.cols();
        const std::size_t in_plane = cin * ncols, out_plane = cout * g.height * g.width;
        std::vector<double> dcols(rows * ncols);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gb = grad.data() + b * out_plane;
          im2col(gb, g, dcols.data());
          if (in[0]) {
            simd::gemm(cin, ncols, rows, weight.values().data(), rows, 1, dcols.data(), ncols,
                       in[0]->data() + b * in_plane, ncols);
          }
          if (in[1]) {
            const auto xt = transpose(input.values().data() + b * in_plane, cin, ncols);
            std::vector<double> dwt(rows * cin, 0.0);
            simd::gemm(rows, cin, ncols, dcols.data(), ncols, 1, xt.data(), cin, dwt.data(), cin);
            double* dw = in[1]->data();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cin; ++c) dw[c * rows + r] += dwt[r * cin + c];
          }
          if (in.size() > 2 && in[2]) {
            const std::size_t plane = g.height * g.width;
            for (std::size_t o = 0; o < cout; ++o) {
              double s = 0.0;
              for (std::size_t j = 0; j < plane; ++j) s += gb[o * plane + j];
              (*in[2])[o] += s;
            }
          }
        }
      });
}

}  // namespace kgsc
