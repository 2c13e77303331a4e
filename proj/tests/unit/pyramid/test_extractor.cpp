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
#include "kgsc/core/error.hpp"
#include "kgsc/pyramid/extractor.hpp"

using namespace kgsc;
using namespace kgsc::pyramid;
using kgsc::testing::random_values;

namespace {

ExtractorConfig small_config() {
  ExtractorConfig c;
  c.pyramid_channels = 8;
  c.stem_channels = 4;
  c.stage_channels = {4, 6, 6, 8, 8};
  return c;
}

void randomize_biases(ParameterStore& store, Rng& rng) {
  for (auto& [name, t] : store) {
    if (name.ends_with(".b")) store.assign(name, random_values(t.numel(), rng, -0.2, 0.2));
  }
}

Tensor random_image(std::size_t side, Rng& rng, std::size_t batch = 1) {
  return Tensor({batch, 3, side, side}, random_values(batch * 3 * side * side, rng, 0.0, 1.0));
}

// Hand-composed reference built directly from the numeric primitives.
std::array<Tensor, kLevels> oracle(const Tensor& img, const ParameterStore& s, double slope) {
  auto conv = [&](const std::string& n, const Tensor& x, std::size_t stride, std::size_t pad) {
    return conv2d(x, s.get(n + ".w"), s.get(n + ".b"), stride, pad);
  };
  auto block = [&](const std::string& p, const Tensor& x) {
    Tensor a = leaky_relu(conv(p + ".conv1", x, 2, 1), slope);
    Tensor b = conv(p + ".conv2", a, 1, 1);
    return leaky_relu(add(b, conv(p + ".skip", x, 2, 0)), slope);
  };
  std::array<Tensor, kLevels> c;
  Tensor h = leaky_relu(conv("extractor.stem", img, 2, 1), slope);
  c[0] = block("extractor.stage2", h);
  c[1] = block("extractor.stage3", c[0]);
  c[2] = block("extractor.stage4", c[1]);
  c[3] = block("extractor.stage5", c[2]);
  c[4] = leaky_relu(conv("extractor.stage6", c[3], 2, 1), slope);
  std::array<Tensor, kLevels> t;
  t[4] = conv("extractor.lateral6", c[4], 1, 0);
  t[3] = add(conv("extractor.lateral5", c[3], 1, 0), upsample2x(t[4]));
  t[2] = add(conv("extractor.lateral4", c[2], 1, 0), upsample2x(t[3]));
  t[1] = add(conv("extractor.lateral3", c[1], 1, 0), upsample2x(t[2]));
  t[0] = add(conv("extractor.lateral2", c[0], 1, 0), upsample2x(t[1]));
  std::array<Tensor, kLevels> p;
  for (std::size_t i = 0; i < kLevels; ++i)
    p[i] = conv("extractor.smooth" + std::to_string(i + 2), t[i], 1, 1);
  return p;
}

}  // namespace

TEST_CASE("extract: 128x128 input yields halving levels 32..2") {
  Rng rng(1);
  ExtractorConfig cfg;  // default width
  ParameterStore store;
  init_extractor(store, cfg, rng);
  FeaturePyramid p = extract(random_image(128, rng), store, cfg);
  CHECK(p.sizes() == std::array<std::size_t, kLevels>{32, 16, 8, 4, 2});
  CHECK(p.channels() == 32);
  CHECK_NOTHROW(p.validate(2));
  for (const Tensor& t : p.levels)
    for (double v : t.values()) REQUIRE(std::isfinite(v));
  CHECK(p.at_level(6).dim(2) == 2);
  CHECK_THROWS_AS(p.at_level(7), Error);
}

TEST_CASE("extract: larger images keep the shape contract") {
  Rng rng(2);
  ExtractorConfig cfg = small_config();
  ParameterStore store;
  init_extractor(store, cfg, rng);
  FeaturePyramid p = extract(random_image(256, rng), store, cfg);
  CHECK(p.sizes() == std::array<std::size_t, kLevels>{64, 32, 16, 8, 4});
  CHECK(p.channels() == cfg.pyramid_channels);
}

TEST_CASE("extract: zero image with zero biases gives a zero pyramid") {
  Rng rng(3);
  ExtractorConfig cfg = small_config();
  ParameterStore store;
  init_extractor(store, cfg, rng);
  FeaturePyramid p = extract(Tensor({1, 3, 128, 128}), store, cfg);
  for (const Tensor& t : p.levels)
    for (double v : t.values()) CHECK(v == 0.0);
}

TEST_CASE("extract: matches the hand-composed oracle") {
  Rng rng(4);
  ExtractorConfig cfg = small_config();
  ParameterStore store;
  init_extractor(store, cfg, rng);
  randomize_biases(store, rng);
  const Tensor img = random_image(128, rng, 2);
  FeaturePyramid p = extract(img, store, cfg);
  auto ref = oracle(img, store, cfg.slope);
  for (std::size_t i = 0; i < kLevels; ++i) {
    REQUIRE(p.levels[i].shape() == ref[i].shape());
    for (std::size_t j = 0; j < ref[i].numel(); ++j)
      REQUIRE(p.levels[i][j] == doctest::Approx(ref[i][j]).epsilon(1e-12));
  }
}

TEST_CASE("extract: rejects images that cannot support five strides") {
  Rng rng(5);
  ExtractorConfig cfg = small_config();
  ParameterStore store;
  init_extractor(store, cfg, rng);
  CHECK_THROWS_AS(extract(Tensor({1, 3, 64, 64}), store, cfg), Error);
  CHECK_THROWS_AS(extract(Tensor({1, 3, 192, 192}), store, cfg), Error);
  CHECK_THROWS_AS(extract(Tensor({1, 1, 128, 128}), store, cfg), Error);
  CHECK_THROWS_AS(extract(Tensor({1, 3, 128, 256}), store, cfg), Error);
  try {
    extract(Tensor({1, 3, 64, 64}), store, cfg);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShape);
  }
}

TEST_CASE("extract: shifting the input by 4 pixels shifts P2 by one cell") {
  // With the coarser laterals silenced, P2 depends only on the stride-4 path,
  // so an aligned shift must carry over away from the borders.
  Rng rng(6);
  ExtractorConfig cfg = small_config();
  ParameterStore store;
  init_extractor(store, cfg, rng);
  for (int lvl = 3; lvl <= 6; ++lvl) {
    const std::string n = "extractor.lateral" + std::to_string(lvl) + ".w";
    store.assign(n, std::vector<double>(store.get(n).numel(), 0.0));
  }
  const std::size_t S = 128;
  Tensor img = random_image(S, rng);
  std::vector<double> shifted(img.numel(), 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 4; x < S; ++x)
        shifted[(c * S + y) * S + x] = img[(c * S + y) * S + x - 4];
  const Tensor a = extract(img, store, cfg).levels[0];
  const Tensor b = extract(Tensor(img.shape(), shifted), store, cfg).levels[0];
  const std::size_t C = a.dim(1), s = a.dim(2);
  double worst = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 3; y + 3 < s; ++y)
      for (std::size_t x = 4; x + 3 < s; ++x)
        worst = std::max(worst, std::abs(b[(c * s + y) * s + x] - a[(c * s + y) * s + x - 1]));
  CHECK(worst < 1e-12);
}

TEST_CASE("FeaturePyramid::validate catches malformed pyramids") {
  FeaturePyramid p;
  for (std::size_t i = 0; i < kLevels; ++i) p.levels[i] = Tensor({1, 2, 32u >> i, 32u >> i});
  CHECK_NOTHROW(p.validate(2));
  CHECK_THROWS_AS(p.validate(4), Error);
  p.levels[2] = Tensor({1, 2, 9, 9});
  CHECK_THROWS_AS(p.validate(), Error);
  p.levels[2] = Tensor({1, 3, 8, 8});
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("upsample2x: nearest-neighbour blocks") {
  Tensor one({1, 1, 1, 1}, {7.0});
  Tensor up = upsample2x(one);
  CHECK(up.shape() == Shape{1, 1, 2, 2});
  for (double v : up.values()) CHECK(v == 7.0);
  Rng rng(7);
  Tensor x({1, 3, 4, 4}, random_values(48, rng));
  CHECK(upsample2x(x).shape() == Shape{1, 3, 8, 8});
}
