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

// Complex-baseband channel: real/complex packing, average-power
// normalization, AWGN, and block Rayleigh fading with perfect-CSI
// equalization.
//
// Noise power is the total variance per complex sample; each of the real and
// imaginary components carries half of it, so SNR = P / noise_power.

#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgsc/core/tensor.hpp"

namespace kgsc::channel {

using Complex = std::complex<double>;

struct ComplexSignal {
  std::vector<Complex> samples;
  // Set when the source had an odd number of reals and a trailing zero
  // imaginary part was appended.
  bool padded = false;

  std::size_t k() const { return samples.size(); }
};

// Consecutive real pairs become (re, im).
ComplexSignal to_complex(std::span<const double> reals);
ComplexSignal to_complex(const Tensor& features);
std::vector<double> to_reals(const ComplexSignal& signal);
Tensor from_complex(const ComplexSignal& signal, const Shape& original_shape);

// (1/k) sum |z_i|^2
double average_power(const ComplexSignal& signal);

// z = sqrt(k P) z~ / sqrt(z~* z~). Throws kDomain for an all-zero input.
ComplexSignal power_normalize(const ComplexSignal& z_tilde, double power);

enum class ChannelKind { kAwgn, kRayleigh };

std::string to_string(ChannelKind kind);
ChannelKind parse_channel_kind(const std::string& name);

double noise_power_for_snr(double snr_db, double power);

struct ChannelConfig {
  ChannelKind kind = ChannelKind::kAwgn;
  double power = 1.0;
  double noise_power = 0.1;
  std::uint64_t seed = 0;
  // false: the receiver passes g z + w through and the decoder must absorb
  // the fading itself.
  bool equalize = true;

  static ChannelConfig from_snr_db(ChannelKind kind, double snr_db, double power,
                                   std::uint64_t seed);
  double snr_db() const;
  void validate() const;
};

ComplexSignal awgn(const ComplexSignal& z, double noise_power, std::uint64_t seed);

struct FadedSignal {
  ComplexSignal signal;
  Complex gain;
};

// One gain per call (block fading), g ~ CN(0, 1). forced_gain replaces the
// draw, for tests.
FadedSignal rayleigh(const ComplexSignal& z, double noise_power, std::uint64_t seed,
                     std::optional<Complex> forced_gain = std::nullopt);

// z^ / g, assuming the receiver knows g. Throws kNumeric when |g| < 1e-12.
ComplexSignal equalize(const ComplexSignal& z_hat, Complex gain);

inline constexpr double kDeepFadeThreshold = 1e-12;

struct ChannelOutput {
  ComplexSignal signal;
  Complex gain{1.0, 0.0};
};

// normalize -> channel -> (optional) equalize, per the config.
ChannelOutput transmit(const ComplexSignal& z_tilde, const ChannelConfig& config);

}  // namespace kgsc::channel
