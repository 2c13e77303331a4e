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

// Toy semantic extractor: a strided convolutional backbone feeding a feature
// pyramid network that emits five levels P2..P6 at strides 4..64.

#pragma once

#include <array>
#include <string>

#include "kgsc/core/layers.hpp"

namespace kgsc::pyramid {

inline constexpr std::size_t kLevels = 5;
inline constexpr std::size_t kFirstLevel = 2;  // levels are named P2..P6

// Five levels of shape [B, C, s_i, s_i] with s_{i+1} = s_i / 2. Also used
// for encoded (X), received (Z) and reconstructed (P_T) pyramids, which
// have their own channel counts and sizes.
struct FeaturePyramid {
  std::array<Tensor, kLevels> levels;

  const Tensor& at_level(std::size_t level) const;  // level in [2, 6]
  std::size_t batch() const { return levels[0].dim(0); }
  std::size_t channels() const { return levels[0].dim(1); }
  std::array<std::size_t, kLevels> sizes() const;

  // Exactly halving square levels sharing batch and channel counts, smallest
  // side at least `min_side`.
  void validate(std::size_t min_side = 1) const;
};

struct ExtractorConfig {
  std::size_t pyramid_channels = 32;
  std::size_t stem_channels = 16;
  // Output channels of the residual stages producing C2..C5, and of the
  // stride-2 convolution producing C6.
  std::array<std::size_t, kLevels> stage_channels{16, 32, 32, 64, 64};
  double slope = kDefaultLeakySlope;
};

// [B, 3, h, w] with h == w, a power of two, h >= 128.
void validate_image(const Tensor& image);

void init_extractor(ParameterStore& store, const ExtractorConfig& config, Rng& rng);

FeaturePyramid extract(const Tensor& image, const ParameterStore& store,
                       const ExtractorConfig& config);

}  // namespace kgsc::pyramid
