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

// Parallel multi-scale semantic codec: five independent single-scale
// encoders and decoders, rate accounting, and the differentiable channel
// pass between them.

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgsc/channel/channel.hpp"
#include "kgsc/pyramid/extractor.hpp"

namespace kgsc::codec {

using pyramid::FeaturePyramid;
using pyramid::kLevels;

// Codes X_i: [B, C, s_i/2, s_i/2]. Same container as the feature pyramid.
using EncodedPyramid = FeaturePyramid;

// k counts complex channel symbols per image, n counts image reals (3 w h).
struct RateConfig {
  double requested = 0.0;
  std::size_t n = 0;
  std::size_t channels = 0;                    // C
  std::array<std::size_t, kLevels> cells{};    // (s_i / 2)^2
  std::array<std::size_t, kLevels> level_k{};  // ceil(C cells_i / 2)
  std::size_t k = 0;                           // sum of level_k
  double achieved = 0.0;                       // k / n

  std::size_t cell_total() const;
  // Change in k/n caused by one more or one fewer code channel.
  double quantum() const;
};

// C = round(2 R n / sum_i (s_i/2)^2). Throws kDomain when C would be 0,
// quoting the smallest representable ratio.
RateConfig channels_for_ratio(double ratio, std::size_t image_side,
                              const std::array<std::size_t, kLevels>& pyramid_sizes);

// Pyramid sizes produced by the extractor for a square image.
std::array<std::size_t, kLevels> pyramid_sizes_for(std::size_t image_side);

struct CodecConfig {
  std::size_t feature_channels = 32;  // C_f
  std::size_t code_channels = 0;      // C
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  double slope = kDefaultLeakySlope;
};

void init_codec(ParameterStore& store, const CodecConfig& config, Rng& rng);

EncodedPyramid encode(const FeaturePyramid& features, const ParameterStore& store,
                      const CodecConfig& config);
FeaturePyramid decode(const EncodedPyramid& received, const ParameterStore& store,
                      const CodecConfig& config);

// Single-scale halves, exposed so each branch can be exercised alone.
Tensor encode_level(std::size_t level_index, const Tensor& x, const ParameterStore& store,
                    const CodecConfig& config);
Tensor decode_level(std::size_t level_index, const Tensor& x, const ParameterStore& store,
                    const CodecConfig& config);

struct TransmitOptions {
  // false: all five scales of an image share one normalized vector.
  bool per_scale = true;
  // Replaces the random fading gain (tests).
  std::optional<channel::Complex> forced_gain;
};

struct BlockRecord {
  std::size_t image = 0;
  std::size_t level = 0;  // index 0..4, or kLevels for the joint vector
  std::size_t k = 0;
  double scale = 0.0;     // sqrt(k P) / ||x||
  double tx_power = 0.0;  // average power of the normalized vector
  channel::Complex gain{1.0, 0.0};
};

struct TransmitReport {
  std::vector<BlockRecord> blocks;
};

// Per image and per scale: flatten, pack to complex, normalize to the power
// budget, pass through the channel, equalize if configured, unpack. Output
// shapes equal input shapes. Gradients treat the noise sample as a constant
// and follow the normalization (and the fading gain when not equalized).
EncodedPyramid transmit_pyramid(const EncodedPyramid& encoded,
                                const channel::ChannelConfig& config,
                                const TransmitOptions& options = {},
                                TransmitReport* report = nullptr);

struct Complexity {
  std::uint64_t parameters = 0;
  std::uint64_t additions = 0;
  std::uint64_t multiplications = 0;
};

// Runs `forward` once without gradient recording and totals the
// multiply/add counts reported by the layers, plus the scalar count of the
// parameters whose names start with any of `prefixes` (all when empty).
Complexity count_complexity(const std::function<void()>& forward, const ParameterStore& store,
                            const std::vector<std::string>& prefixes = {});

}  // namespace kgsc::codec
