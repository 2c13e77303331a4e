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

#include "kgsc/pyramid/extractor.hpp"

#include <bit>

#include "kgsc/core/error.hpp"

namespace kgsc::pyramid {

const Tensor& FeaturePyramid::at_level(std::size_t level) const {
  if (level < kFirstLevel || level >= kFirstLevel + kLevels) {
    fail(ErrorKind::kDomain, "pyramid level P" + std::to_string(level) + " does not exist");
  }
  return levels[level - kFirstLevel];
}

std::array<std::size_t, kLevels> FeaturePyramid::sizes() const {
  std::array<std::size_t, kLevels> out{};
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = levels[i].dim(2);
  return out;
}

void FeaturePyramid::validate(std::size_t min_side) const {
  for (std::size_t i = 0; i < kLevels; ++i) {
    const Tensor& t = levels[i];
    if (!t.defined() || t.rank() != 4 || t.dim(2) != t.dim(3)) {
      fail(ErrorKind::kShape, "pyramid level P" + std::to_string(i + kFirstLevel) +
                                  " must be a square [B, C, s, s] tensor");
    }
    if (t.dim(0) != levels[0].dim(0) || t.dim(1) != levels[0].dim(1)) {
      fail(ErrorKind::kShape, "pyramid levels disagree on batch/channels: " +
                                  shape_str(levels[0].shape()) + " vs " + shape_str(t.shape()));
    }
    if (i > 0 && 2 * t.dim(2) != levels[i - 1].dim(2)) {
      fail(ErrorKind::kShape, "pyramid level sizes must halve: " +
                                  shape_str(levels[i - 1].shape()) + " then " +
                                  shape_str(t.shape()));
    }
  }
  if (levels[kLevels - 1].dim(2) < min_side) {
    fail(ErrorKind::kShape, "smallest pyramid level has side " +
                                std::to_string(levels[kLevels - 1].dim(2)) + ", need at least " +
                                std::to_string(min_side));
  }
}

void validate_image(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != image.dim(3)) {
    fail(ErrorKind::kShape, "image must be [B, 3, h, h], got " + shape_str(image.shape()));
  }
  const std::size_t side = image.dim(2);
  if (side < 128 || !std::has_single_bit(side)) {
    fail(ErrorKind::kShape, "image side " + std::to_string(side) +
                                " is too small for five pyramid strides (need a power of two >= 128)");
  }
}

namespace {

std::string stage_name(std::size_t i) { return "extractor.stage" + std::to_string(i + 2); }
std::string lateral_name(std::size_t i) { return "extractor.lateral" + std::to_string(i + 2); }
std::string smooth_name(std::size_t i) { return "extractor.smooth" + std::to_string(i + 2); }

ResidualSpec stage_spec(const ExtractorConfig& c, std::size_t i) {
  const std::size_t in = i == 0 ? c.stem_channels : c.stage_channels[i - 1];
  return {in, c.stage_channels[i], 2, c.slope};
}

ConvSpec stem_spec(const ExtractorConfig& c) { return {3, c.stem_channels, 3, 2, 1}; }
ConvSpec top_spec(const ExtractorConfig& c) {
  return {c.stage_channels[3], c.stage_channels[4], 3, 2, 1};
}
ConvSpec lateral_spec(const ExtractorConfig& c, std::size_t i) {
  return {c.stage_channels[i], c.pyramid_channels, 1, 1, 0};
}
ConvSpec smooth_spec(const ExtractorConfig& c) {
  return {c.pyramid_channels, c.pyramid_channels, 3, 1, 1};
}

}  // namespace

void init_extractor(ParameterStore& store, const ExtractorConfig& config, Rng& rng) {
  init_conv(store, "extractor.stem", stem_spec(config), rng);
  for (std::size_t i = 0; i < 4; ++i) init_residual_block(store, stage_name(i), stage_spec(config, i), rng);
  init_conv(store, "extractor.stage6", top_spec(config), rng);
  for (std::size_t i = 0; i < kLevels; ++i) {
    init_conv(store, lateral_name(i), lateral_spec(config, i), rng);
    init_conv(store, smooth_name(i), smooth_spec(config), rng);
  }
}

FeaturePyramid extract(const Tensor& image, const ParameterStore& store,
                       const ExtractorConfig& config) {
  validate_image(image);
  // Bottom-up: stem at stride 2, residual stages at strides 4..32, one
  // stride-2 convolution for stride 64.
  std::array<Tensor, kLevels> stages;
  Tensor h = leaky_relu(apply_conv(store, "extractor.stem", stem_spec(config), image), config.slope);
  for (std::size_t i = 0; i < 4; ++i) {
    h = residual_block(store, stage_name(i), stage_spec(config, i), h);
    stages[i] = h;
  }
  stages[4] = leaky_relu(apply_conv(store, "extractor.stage6", top_spec(config), stages[3]),
                         config.slope);

  // Top-down: lateral 1x1 projections plus upsampled coarser maps, then 3x3
  // smoothing per level.
  FeaturePyramid out;
  Tensor top;
  for (std::size_t j = kLevels; j-- > 0;) {
    Tensor lat = apply_conv(store, lateral_name(j), lateral_spec(config, j), stages[j]);
    top = top.defined() ? add(lat, upsample2x(top)) : lat;
    out.levels[j] = apply_conv(store, smooth_name(j), smooth_spec(config), top);
  }
  return out;
}

}  // namespace kgsc::pyramid
