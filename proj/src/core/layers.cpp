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

#include "kgsc/core/layers.hpp"

#include <algorithm>

#include "kgsc/core/error.hpp"

namespace kgsc {

void init_conv(ParameterStore& store, const std::string& name, const ConvSpec& spec, Rng& rng) {
  const std::size_t fan_in = spec.in_channels * spec.kernel * spec.kernel;
  store.add(name + ".w",
            Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                   fan_in_uniform(spec.out_channels * fan_in, fan_in, rng)));
  store.add(name + ".b", Tensor({spec.out_channels}));
}

Tensor apply_conv(const ParameterStore& store, const std::string& name, const ConvSpec& spec,
                  const Tensor& x) {
  return conv2d(x, store.get(name + ".w"), store.get(name + ".b"), spec.stride, spec.padding);
}

void init_deconv(ParameterStore& store, const std::string& name, const ConvSpec& spec, Rng& rng) {
  // Each output sees about in * K^2 / stride^2 taps.
  const std::size_t fan_in = std::max<std::size_t>(
      1, spec.in_channels * spec.kernel * spec.kernel / (spec.stride * spec.stride));
  store.add(name + ".w", Tensor({spec.in_channels, spec.out_channels, spec.kernel, spec.kernel},
                                fan_in_uniform(spec.in_channels * spec.out_channels * spec.kernel *
                                                   spec.kernel,
                                               fan_in, rng)));
  store.add(name + ".b", Tensor({spec.out_channels}));
}

Tensor apply_deconv(const ParameterStore& store, const std::string& name, const ConvSpec& spec,
                    const Tensor& x) {
  return deconv2d(x, store.get(name + ".w"), store.get(name + ".b"), spec.stride, spec.padding);
}

void init_fc(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
             Rng& rng) {
  store.add(name + ".w", Tensor({in, out}, fan_in_uniform(in * out, in, rng)));
  store.add(name + ".b", Tensor({out}));
}

Tensor apply_fc(const ParameterStore& store, const std::string& name, const Tensor& x) {
  return fully_connected(x, store.get(name + ".w"), store.get(name + ".b"));
}

void init_residual_block(ParameterStore& store, const std::string& prefix, const ResidualSpec& spec,
                         Rng& rng) {
  init_conv(store, prefix + ".conv1", {spec.in_channels, spec.out_channels, 3, spec.stride, 1}, rng);
  init_conv(store, prefix + ".conv2", {spec.out_channels, spec.out_channels, 3, 1, 1}, rng);
  if (spec.projected()) {
    init_conv(store, prefix + ".skip", {spec.in_channels, spec.out_channels, 1, spec.stride, 0},
              rng);
  }
}

Tensor residual_block(const ParameterStore& store, const std::string& prefix,
                      const ResidualSpec& spec, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != spec.in_channels) {
    fail(ErrorKind::kShape, "residual block '" + prefix + "' expects " +
                                std::to_string(spec.in_channels) + " channels, got input " +
                                shape_str(x.shape()));
  }
  Tensor inner = leaky_relu(
      apply_conv(store, prefix + ".conv1", {spec.in_channels, spec.out_channels, 3, spec.stride, 1},
                 x),
      spec.slope);
  inner = apply_conv(store, prefix + ".conv2", {spec.out_channels, spec.out_channels, 3, 1, 1},
                     inner);
  const Tensor skip =
      spec.projected()
          ? apply_conv(store, prefix + ".skip",
                       {spec.in_channels, spec.out_channels, 1, spec.stride, 0}, x)
          : x;
  return leaky_relu(add(inner, skip), spec.slope);
}

}  // namespace kgsc
