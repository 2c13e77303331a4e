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

// Parameterized building blocks on top of the raw ops. Each block owns a
// name prefix in a ParameterStore: "<prefix>.w" / "<prefix>.b" for single
// layers, "<prefix>.conv1" etc. for composites.

#pragma once

#include <string>

#include "kgsc/core/ops.hpp"
#include "kgsc/core/params.hpp"

namespace kgsc {

inline constexpr double kDefaultLeakySlope = 0.01;

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

void init_conv(ParameterStore& store, const std::string& name, const ConvSpec& spec, Rng& rng);
Tensor apply_conv(const ParameterStore& store, const std::string& name, const ConvSpec& spec,
                  const Tensor& x);

// Transposed convolution; weight stored as [in, out, K, K].
void init_deconv(ParameterStore& store, const std::string& name, const ConvSpec& spec, Rng& rng);
Tensor apply_deconv(const ParameterStore& store, const std::string& name, const ConvSpec& spec,
                    const Tensor& x);

void init_fc(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
             Rng& rng);
Tensor apply_fc(const ParameterStore& store, const std::string& name, const Tensor& x);

// Two 3x3 convolutions with a leaky rectifier between them, added to an
// identity skip (or a 1x1 projection when channels or stride change), then
// rectified.
struct ResidualSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  double slope = kDefaultLeakySlope;

  bool projected() const { return in_channels != out_channels || stride != 1; }
};

void init_residual_block(ParameterStore& store, const std::string& prefix, const ResidualSpec& spec,
                         Rng& rng);
Tensor residual_block(const ParameterStore& store, const std::string& prefix,
                      const ResidualSpec& spec, const Tensor& x);

}  // namespace kgsc
