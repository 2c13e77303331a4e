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

#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "kgsc/channel/channel.hpp"
#include "kgsc/core/error.hpp"

using namespace kgsc;
using namespace kgsc::channel;

namespace {

ComplexSignal random_signal(std::size_t k, Rng& rng) {
  ComplexSignal s;
  for (std::size_t i = 0; i < k; ++i) s.samples.emplace_back(rng.normal(), rng.normal());
  return s;
}

}  // namespace

TEST_CASE("real/complex packing") {
  const std::vector<double> four{1, 2, 3, 4};
  const ComplexSignal s = to_complex(four);
  REQUIRE(s.k() == 2);
  CHECK(s.samples[0] == Complex(1, 2));
  CHECK(s.samples[1] == Complex(3, 4));
  CHECK(!s.padded);

  const std::vector<double> five{1, 2, 3, 4, 5};
  const ComplexSignal odd = to_complex(five);
  REQUIRE(odd.k() == 3);
  CHECK(odd.padded);
  CHECK(odd.samples[2] == Complex(5, 0));
  const Tensor back = from_complex(odd, {5});
  CHECK(std::vector<double>(back.values().begin(), back.values().end()) == five);

  Rng rng(1);
  for (std::size_t n : {1u, 2u, 7u, 64u}) {
    const Tensor t = testing::random_param({n}, rng).detach();
    const Tensor r = from_complex(to_complex(t), t.shape());
    for (std::size_t i = 0; i < n; ++i) CHECK(r[i] == t[i]);
  }
}

TEST_CASE("power normalization examples") {
  ComplexSignal unit;
  unit.samples = {{1, 0}, {0, 1}};
  const ComplexSignal same = power_normalize(unit, 1.0);
  CHECK(same.samples[0] == Complex(1, 0));
  CHECK(same.samples[1] == Complex(0, 1));

  ComplexSignal two;
  two.samples = {{2, 0}};
  CHECK(std::abs(power_normalize(two, 1.0).samples[0] - Complex(1, 0)) < 1e-15);

  ComplexSignal zero;
  zero.samples.assign(3, Complex(0, 0));
  CHECK_THROWS_AS(power_normalize(zero, 1.0), Error);
}

TEST_CASE("power normalization is scale invariant and hits P exactly") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng.index(500);
    const ComplexSignal z = random_signal(k, rng);
    const double p = rng.uniform(0.1, 10.0);
    const ComplexSignal a = power_normalize(z, p);
    CHECK(std::abs(average_power(a) - p) / p < 1e-12);
    ComplexSignal scaled = z;
    const double c = rng.uniform(0.01, 100.0);
    for (Complex& s : scaled.samples) s *= c;
    const ComplexSignal b = power_normalize(scaled, p);
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(a.samples[i] - b.samples[i]) < 1e-12);
  }
}

TEST_CASE("SNR bookkeeping") {
  CHECK(noise_power_for_snr(10.0, 1.0) == doctest::Approx(0.1).epsilon(1e-15));
  const ChannelConfig c = ChannelConfig::from_snr_db(ChannelKind::kAwgn, 7.0, 2.0, 1);
  CHECK(c.snr_db() == doctest::Approx(7.0).epsilon(1e-12));
  ChannelConfig bad;
  bad.power = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.power = 1.0;
  bad.noise_power = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("AWGN noise statistics") {
  Rng rng(3);
  const ComplexSignal z = random_signal(16, rng);
  const ComplexSignal quiet = awgn(z, 0.0, 5);
  for (std::size_t i = 0; i < z.k(); ++i) CHECK(quiet.samples[i] == z.samples[i]);

  const std::size_t n = 1000000;
  ComplexSignal zeros;
  zeros.samples.assign(n, Complex(0, 0));
  const double sigma2 = 0.37;
  const ComplexSignal noise = awgn(zeros, sigma2, 11);
  double var = 0.0, cross = 0.0, vr = 0.0, vi = 0.0;
  for (const Complex& c : noise.samples) {
    var += std::norm(c);
    cross += c.real() * c.imag();
    vr += c.real() * c.real();
    vi += c.imag() * c.imag();
  }
  var /= n;
  CHECK(std::abs(var - sigma2) / sigma2 < 0.01);
  CHECK(std::abs(cross / std::sqrt(vr * vi)) <= 0.01);

  const ComplexSignal again = awgn(zeros, sigma2, 11);
  CHECK(again.samples == noise.samples);
}

TEST_CASE("Rayleigh fading examples") {
  Rng rng(4);
  const ComplexSignal z = random_signal(32, rng);
  const FadedSignal same = rayleigh(z, 0.0, 1, Complex(1, 0));
  for (std::size_t i = 0; i < z.k(); ++i) CHECK(same.signal.samples[i] == z.samples[i]);

  const FadedSignal rot = rayleigh(z, 0.0, 1, Complex(0, 1));
  for (std::size_t i = 0; i < z.k(); ++i) {
    CHECK(rot.signal.samples[i].real() == doctest::Approx(-z.samples[i].imag()));
    CHECK(rot.signal.samples[i].imag() == doctest::Approx(z.samples[i].real()));
  }

  const FadedSignal faded = rayleigh(z, 0.0, 9);
  const ComplexSignal eq = equalize(faded.signal, faded.gain);
  for (std::size_t i = 0; i < z.k(); ++i) CHECK(std::abs(eq.samples[i] - z.samples[i]) < 1e-12);

  const ComplexSignal ident = equalize(z, Complex(1, 0));
  CHECK(ident.samples == z.samples);
  CHECK_THROWS_AS(equalize(z, Complex(1e-13, 0)), Error);
}

TEST_CASE("Rayleigh gain has unit mean power") {
  ComplexSignal one;
  one.samples = {{1, 0}};
  const std::size_t n = 1000000;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::norm(rayleigh(one, 0.0, i).gain);
  CHECK(std::abs(acc / n - 1.0) < 0.01);
}

TEST_CASE("equalized residual variance scales with 1/|g|^2") {
  const std::size_t n = 1000000;
  ComplexSignal zeros;
  zeros.samples.assign(n, Complex(0, 0));
  const double sigma2 = 0.2;
  const Complex g(0.3, -0.4);  // |g|^2 = 0.25
  const FadedSignal f = rayleigh(zeros, sigma2, 21, g);
  const ComplexSignal eq = equalize(f.signal, f.gain);
  double var = 0.0;
  for (const Complex& c : eq.samples) var += std::norm(c);
  var /= n;
  CHECK(std::abs(var - sigma2 / 0.25) / (sigma2 / 0.25) < 0.01);
}

TEST_CASE("transmit normalizes before the channel") {
  Rng rng(5);
  const ComplexSignal z = random_signal(100, rng);
  ChannelConfig cfg;
  cfg.noise_power = 0.0;
  cfg.power = 2.5;
  const ChannelOutput out = transmit(z, cfg);
  CHECK(std::abs(average_power(out.signal) - 2.5) < 1e-12);
  cfg.kind = ChannelKind::kRayleigh;
  const ChannelOutput eq = transmit(z, cfg);
  CHECK(std::abs(average_power(eq.signal) - 2.5) < 1e-9);
}
