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

#include "kgsc/codec/codec.hpp"

#include <cmath>
#include <numeric>

#include "kgsc/core/error.hpp"

namespace kgsc::codec {

std::size_t RateConfig::cell_total() const {
  return std::accumulate(cells.begin(), cells.end(), std::size_t{0});
}

double RateConfig::quantum() const {
  return static_cast<double>(cell_total()) / (2.0 * static_cast<double>(n));
}

std::array<std::size_t, kLevels> pyramid_sizes_for(std::size_t image_side) {
  std::array<std::size_t, kLevels> out{};
  for (std::size_t i = 0; i < kLevels; ++i) out[i] = image_side >> (i + 2);
  return out;
}

RateConfig channels_for_ratio(double ratio, std::size_t image_side,
                              const std::array<std::size_t, kLevels>& pyramid_sizes) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    fail(ErrorKind::kDomain, "compression ratio must be positive, got " + std::to_string(ratio));
  }
  RateConfig rc;
  rc.requested = ratio;
  rc.n = 3 * image_side * image_side;
  for (std::size_t i = 0; i < kLevels; ++i) {
    if (pyramid_sizes[i] < 2 || pyramid_sizes[i] % 2 != 0) {
      fail(ErrorKind::kShape, "pyramid level side " + std::to_string(pyramid_sizes[i]) +
                                  " cannot be halved by the encoder");
    }
    rc.cells[i] = (pyramid_sizes[i] / 2) * (pyramid_sizes[i] / 2);
  }
  const double total = static_cast<double>(rc.cell_total());
  const double c = std::round(2.0 * ratio * static_cast<double>(rc.n) / total);
  if (c < 1.0) {
    fail(ErrorKind::kDomain, "compression ratio " + std::to_string(ratio) +
                                 " needs fewer than one code channel; minimum representable R is " +
                                 std::to_string(total / (2.0 * static_cast<double>(rc.n))));
  }
  rc.channels = static_cast<std::size_t>(c);
  for (std::size_t i = 0; i < kLevels; ++i) {
    rc.level_k[i] = (rc.channels * rc.cells[i] + 1) / 2;
    rc.k += rc.level_k[i];
  }
  rc.achieved = static_cast<double>(rc.k) / static_cast<double>(rc.n);
  return rc;
}

namespace {

std::string enc_name(std::size_t i) { return "codec.enc" + std::to_string(i + 2); }
std::string dec_name(std::size_t i) { return "codec.dec" + std::to_string(i + 2); }

ResidualSpec block_spec(const CodecConfig& c) {
  return {c.feature_channels, c.feature_channels, 1, c.slope};
}
ConvSpec down_spec(const CodecConfig& c) { return {c.feature_channels, c.code_channels, 3, 2, 1}; }
ConvSpec up_spec(const CodecConfig& c) { return {c.code_channels, c.feature_channels, 4, 2, 1}; }

void check_config(const CodecConfig& c) {
  if (c.feature_channels == 0 || c.code_channels == 0) {
    fail(ErrorKind::kConfig, "codec channel counts must be positive");
  }
}

}  // namespace

void init_codec(ParameterStore& store, const CodecConfig& config, Rng& rng) {
  check_config(config);
  for (std::size_t i = 0; i < kLevels; ++i) {
    for (std::size_t j = 0; j < config.encoder_blocks; ++j)
      init_residual_block(store, enc_name(i) + ".res" + std::to_string(j), block_spec(config), rng);
    init_conv(store, enc_name(i) + ".down", down_spec(config), rng);
    init_deconv(store, dec_name(i) + ".up", up_spec(config), rng);
    for (std::size_t j = 0; j < config.decoder_blocks; ++j)
      init_residual_block(store, dec_name(i) + ".res" + std::to_string(j), block_spec(config), rng);
  }
}

Tensor encode_level(std::size_t i, const Tensor& x, const ParameterStore& store,
                    const CodecConfig& config) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    fail(ErrorKind::kShape, "encoder level " + std::to_string(i + 2) +
                                " needs spatial size >= 2, got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t j = 0; j < config.encoder_blocks; ++j)
    h = residual_block(store, enc_name(i) + ".res" + std::to_string(j), block_spec(config), h);
  return apply_conv(store, enc_name(i) + ".down", down_spec(config), h);
}

Tensor decode_level(std::size_t i, const Tensor& x, const ParameterStore& store,
                    const CodecConfig& config) {
  if (x.rank() != 4 || x.dim(1) != config.code_channels) {
    fail(ErrorKind::kShape, "decoder level " + std::to_string(i + 2) + " expects " +
                                std::to_string(config.code_channels) + " code channels, got " +
                                shape_str(x.shape()));
  }
  Tensor h = apply_deconv(store, dec_name(i) + ".up", up_spec(config), x);
  for (std::size_t j = 0; j < config.decoder_blocks; ++j)
    h = residual_block(store, dec_name(i) + ".res" + std::to_string(j), block_spec(config), h);
  return h;
}

EncodedPyramid encode(const FeaturePyramid& features, const ParameterStore& store,
                      const CodecConfig& config) {
  check_config(config);
  features.validate(2);
  EncodedPyramid out;
  for (std::size_t i = 0; i < kLevels; ++i)
    out.levels[i] = encode_level(i, features.levels[i], store, config);
  return out;
}

FeaturePyramid decode(const EncodedPyramid& received, const ParameterStore& store,
                      const CodecConfig& config) {
  check_config(config);
  received.validate(1);
  FeaturePyramid out;
  for (std::size_t i = 0; i < kLevels; ++i)
    out.levels[i] = decode_level(i, received.levels[i], store, config);
  return out;
}

namespace {

struct Segment {
  std::size_t offset;  // into the level-major flat layout
  std::size_t length;
};

struct Block {
  std::size_t image = 0;
  std::size_t level = 0;
  std::vector<Segment> segments;
  std::size_t length = 0;
  double scale = 0.0;
  channel::Complex gain{1.0, 0.0};  // multiplier seen by the signal after equalization
  std::vector<double> x;            // gathered input
};

}  // namespace

EncodedPyramid transmit_pyramid(const EncodedPyramid& encoded,
                                const channel::ChannelConfig& config,
                                const TransmitOptions& options, TransmitReport* report) {
  config.validate();
  encoded.validate(1);
  const std::size_t B = encoded.batch();

  std::array<std::size_t, kLevels> level_offset{};
  std::array<std::size_t, kLevels> per_image{};
  std::size_t total = 0;
  for (std::size_t i = 0; i < kLevels; ++i) {
    level_offset[i] = total;
    per_image[i] = encoded.levels[i].numel() / B;
    total += encoded.levels[i].numel();
  }
  std::vector<double> flat(total);
  for (std::size_t i = 0; i < kLevels; ++i) {
    auto v = encoded.levels[i].values();
    std::copy(v.begin(), v.end(), flat.begin() + static_cast<std::ptrdiff_t>(level_offset[i]));
  }

  auto blocks = std::make_shared<std::vector<Block>>();
  for (std::size_t b = 0; b < B; ++b) {
    if (options.per_scale) {
      for (std::size_t i = 0; i < kLevels; ++i) {
        Block blk;
        blk.image = b;
        blk.level = i;
        blk.segments.push_back({level_offset[i] + b * per_image[i], per_image[i]});
        blocks->push_back(std::move(blk));
      }
    } else {
      Block blk;
      blk.image = b;
      blk.level = kLevels;
      for (std::size_t i = 0; i < kLevels; ++i)
        blk.segments.push_back({level_offset[i] + b * per_image[i], per_image[i]});
      blocks->push_back(std::move(blk));
    }
  }

  std::vector<double> out(total);
  for (Block& blk : *blocks) {
    for (const Segment& s : blk.segments) {
      blk.x.insert(blk.x.end(), flat.begin() + static_cast<std::ptrdiff_t>(s.offset),
                   flat.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
    }
    blk.length = blk.x.size();
    const channel::ComplexSignal z_tilde = channel::to_complex(blk.x);
    double energy = 0.0;
    for (double v : blk.x) energy += v * v;
    if (!(energy > 0.0)) {
      fail(ErrorKind::kDomain, "cannot normalize an all-zero code block (image " +
                                   std::to_string(blk.image) + ", level " +
                                   std::to_string(blk.level + 2) + ")");
    }
    blk.scale = std::sqrt(static_cast<double>(z_tilde.k()) * config.power / energy);
    const channel::ComplexSignal z = channel::power_normalize(z_tilde, config.power);
    const std::uint64_t seed = derive_seed(config.seed, {blk.image, blk.level});
    channel::ComplexSignal received;
    channel::Complex gain{1.0, 0.0};
    if (config.kind == channel::ChannelKind::kAwgn) {
      received = channel::awgn(z, config.noise_power, seed);
    } else {
      channel::FadedSignal faded =
          channel::rayleigh(z, config.noise_power, seed, options.forced_gain);
      gain = faded.gain;
      if (config.equalize) {
        received = channel::equalize(faded.signal, faded.gain);
      } else {
        received = std::move(faded.signal);
        blk.gain = faded.gain;
      }
    }
    if (report) {
      report->blocks.push_back({blk.image, blk.level, z.k(), blk.scale,
                                channel::average_power(z), gain});
    }
    const std::vector<double> reals = channel::to_reals(received);
    std::size_t pos = 0;
    for (const Segment& s : blk.segments) {
      std::copy(reals.begin() + static_cast<std::ptrdiff_t>(pos),
                reals.begin() + static_cast<std::ptrdiff_t>(pos + s.length),
                out.begin() + static_cast<std::ptrdiff_t>(s.offset));
      pos += s.length;
    }
  }

  // y = G (s x) + w, with G the complex gain (identity when equalized).
  // dL/dx = s (u - x <x, u> / ||x||^2), u = G^H dL/dy.
  Tensor joined = make_op(
      {total}, std::move(out), std::span<const Tensor>(encoded.levels.data(), kLevels),
      [blocks, level_offset](std::span<const double> gy, std::span<std::vector<double>*> gin) {
        for (const Block& blk : *blocks) {
          std::vector<double> u;
          u.reserve(blk.length + 1);
          for (const Segment& s : blk.segments)
            u.insert(u.end(), gy.begin() + static_cast<std::ptrdiff_t>(s.offset),
                     gy.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
          const bool odd = u.size() % 2 != 0;
          if (odd) u.push_back(0.0);
          if (blk.gain != channel::Complex(1.0, 0.0)) {
            const channel::Complex cg = std::conj(blk.gain);
            for (std::size_t p = 0; p < u.size(); p += 2) {
              const channel::Complex r = cg * channel::Complex(u[p], u[p + 1]);
              u[p] = r.real();
              u[p + 1] = r.imag();
            }
          }
          if (odd) u.pop_back();
          double xu = 0.0, xx = 0.0;
          for (std::size_t p = 0; p < blk.length; ++p) {
            xu += blk.x[p] * u[p];
            xx += blk.x[p] * blk.x[p];
          }
          const double proj = xu / xx;
          std::size_t pos = 0;
          for (const Segment& s : blk.segments) {
            std::size_t level = kLevels - 1;
            while (s.offset < level_offset[level]) --level;
            std::vector<double>* g = gin[level];
            if (g) {
              const std::size_t base = s.offset - level_offset[level];
              for (std::size_t p = 0; p < s.length; ++p, ++pos)
                (*g)[base + p] += blk.scale * (u[pos] - blk.x[pos] * proj);
            } else {
              pos += s.length;
            }
          }
        }
      });

  EncodedPyramid result;
  for (std::size_t i = 0; i < kLevels; ++i)
    result.levels[i] = slice_flat(joined, level_offset[i], encoded.levels[i].shape());
  return result;
}

Complexity count_complexity(const std::function<void()>& forward, const ParameterStore& store,
                            const std::vector<std::string>& prefixes) {
  Complexity out;
  {
    NoGradGuard no_grad;
    ComplexityScope scope;
    forward();
    out.additions = scope.counts().additions;
    out.multiplications = scope.counts().multiplications;
  }
  if (prefixes.empty()) {
    out.parameters = store.scalar_count();
  } else {
    for (const std::string& p : prefixes) out.parameters += store.scalar_count(p);
  }
  return out;
}

}  // namespace kgsc::codec
