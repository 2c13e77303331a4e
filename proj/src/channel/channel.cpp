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

#include "kgsc/channel/channel.hpp"

#include <cmath>
#include <limits>

#include "kgsc/core/error.hpp"
#include "kgsc/core/rng.hpp"

namespace kgsc::channel {

ComplexSignal to_complex(std::span<const double> reals) {
  ComplexSignal out;
  out.padded = reals.size() % 2 == 1;
  out.samples.resize((reals.size() + 1) / 2);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double re = reals[2 * i];
    const double im = 2 * i + 1 < reals.size() ? reals[2 * i + 1] : 0.0;
    out.samples[i] = {re, im};
  }
  return out;
}

ComplexSignal to_complex(const Tensor& features) { return to_complex(features.values()); }

std::vector<double> to_reals(const ComplexSignal& signal) {
  std::vector<double> out;
  out.reserve(2 * signal.k());
  for (const Complex& c : signal.samples) {
    out.push_back(c.real());
    out.push_back(c.imag());
  }
  if (signal.padded && !out.empty()) out.pop_back();
  return out;
}

Tensor from_complex(const ComplexSignal& signal, const Shape& original_shape) {
  return Tensor(original_shape, to_reals(signal));
}

double average_power(const ComplexSignal& signal) {
  if (signal.k() == 0) return 0.0;
  double e = 0.0;
  for (const Complex& c : signal.samples) e += std::norm(c);
  return e / static_cast<double>(signal.k());
}

ComplexSignal power_normalize(const ComplexSignal& z_tilde, double power) {
  if (!(power > 0.0)) fail(ErrorKind::kDomain, "transmit power must be positive");
  double energy = 0.0;
  for (const Complex& c : z_tilde.samples) energy += std::norm(c);
  if (!(energy > 0.0)) {
    fail(ErrorKind::kDomain, "power normalization of an all-zero signal is undefined");
  }
  const double gain = std::sqrt(static_cast<double>(z_tilde.k()) * power / energy);
  ComplexSignal out = z_tilde;
  for (Complex& c : out.samples) c *= gain;
  return out;
}

std::string to_string(ChannelKind kind) { return kind == ChannelKind::kAwgn ? "awgn" : "rayleigh"; }

ChannelKind parse_channel_kind(const std::string& name) {
  if (name == "awgn" || name == "AWGN") return ChannelKind::kAwgn;
  if (name == "rayleigh" || name == "Rayleigh") return ChannelKind::kRayleigh;
  fail(ErrorKind::kConfig, "unknown channel kind '" + name + "' (expected awgn or rayleigh)");
}

double noise_power_for_snr(double snr_db, double power) {
  return power / std::pow(10.0, snr_db / 10.0);
}

ChannelConfig ChannelConfig::from_snr_db(ChannelKind kind, double snr_db, double power,
                                         std::uint64_t seed) {
  ChannelConfig c;
  c.kind = kind;
  c.power = power;
  c.noise_power = noise_power_for_snr(snr_db, power);
  c.seed = seed;
  c.validate();
  return c;
}

double ChannelConfig::snr_db() const {
  if (noise_power == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(power / noise_power);
}

void ChannelConfig::validate() const {
  if (!(power > 0.0)) fail(ErrorKind::kConfig, "channel power must be positive");
  if (!(noise_power >= 0.0)) fail(ErrorKind::kConfig, "channel noise power must be non-negative");
}

namespace {

void add_noise(ComplexSignal& z, double noise_power, Rng& rng) {
  if (noise_power < 0.0) fail(ErrorKind::kDomain, "noise power must be non-negative");
  if (noise_power == 0.0) return;
  const double sd = std::sqrt(noise_power / 2.0);
  for (Complex& c : z.samples) {
    const double re = rng.normal(0.0, sd);
    const double im = rng.normal(0.0, sd);
    c += Complex(re, im);
  }
}

}  // namespace

ComplexSignal awgn(const ComplexSignal& z, double noise_power, std::uint64_t seed) {
  Rng rng(seed);
  ComplexSignal out = z;
  add_noise(out, noise_power, rng);
  return out;
}

FadedSignal rayleigh(const ComplexSignal& z, double noise_power, std::uint64_t seed,
                     std::optional<Complex> forced_gain) {
  Rng rng(seed);
  const double sd = std::sqrt(0.5);
  const double gr = rng.normal(0.0, sd);
  const double gi = rng.normal(0.0, sd);
  const Complex g = forced_gain.value_or(Complex(gr, gi));
  FadedSignal out{z, g};
  for (Complex& c : out.signal.samples) c *= g;
  add_noise(out.signal, noise_power, rng);
  return out;
}

ComplexSignal equalize(const ComplexSignal& z_hat, Complex gain) {
  if (std::abs(gain) < kDeepFadeThreshold) {
    fail(ErrorKind::kNumeric, "deep fade: |g| below 1e-12, block is in outage");
  }
  ComplexSignal out = z_hat;
  for (Complex& c : out.samples) c /= gain;
  return out;
}

ChannelOutput transmit(const ComplexSignal& z_tilde, const ChannelConfig& config) {
  config.validate();
  const ComplexSignal z = power_normalize(z_tilde, config.power);
  if (config.kind == ChannelKind::kAwgn) return {awgn(z, config.noise_power, config.seed)};
  FadedSignal faded = rayleigh(z, config.noise_power, config.seed);
  if (config.equalize) return {equalize(faded.signal, faded.gain), faded.gain};
  return {std::move(faded.signal), faded.gain};
}

}  // namespace kgsc::channel
