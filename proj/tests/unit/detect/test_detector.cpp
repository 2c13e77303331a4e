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
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "kgsc/core/error.hpp"
#include "kgsc/detect/detector.hpp"

using namespace kgsc;
using namespace kgsc::detect;
using kgsc::testing::gradcheck;
using kgsc::testing::random_values;

namespace {

FeaturePyramid random_pyramid(std::size_t B, std::size_t C, std::size_t side, Rng& rng,
                              bool track = false) {
  FeaturePyramid p;
  for (std::size_t i = 0; i < kLevels; ++i) {
    const std::size_t s = side >> (i + 2);
    Shape shape{B, C, s, s};
    auto v = random_values(shape_numel(shape), rng);
    p.levels[i] = track ? Tensor::parameter(shape, v) : Tensor(shape, v);
  }
  return p;
}

Box random_box(Rng& rng, double extent = 128.0) {
  const double x = rng.uniform(0, extent), y = rng.uniform(0, extent);
  return {x, y, x + rng.uniform(1, 60), y + rng.uniform(1, 60)};
}

}  // namespace

TEST_CASE("iou: hand cases") {
  const Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{5, 5, 6, 6}) == 0.0);
  CHECK(iou(a, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, Box{1, 1, 1, 3}) == 0.0);  // zero area
  CHECK(iou(a, Box{2, 0, 4, 2}) == 0.0);  // touching edge
}

TEST_CASE("box deltas round trip") {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Box box = random_box(rng), anchor = random_box(rng);
    const Box back = decode_delta(encode_delta(box, anchor), anchor);
    CHECK(std::abs(back.x1 - box.x1) <= 1e-9);
    CHECK(std::abs(back.y1 - box.y1) <= 1e-9);
    CHECK(std::abs(back.x2 - box.x2) <= 1e-9);
    CHECK(std::abs(back.y2 - box.y2) <= 1e-9);
  }
  const Delta zero = encode_delta(Box{1, 2, 5, 10}, Box{1, 2, 5, 10});
  CHECK(zero.tx == 0.0);
  CHECK(zero.tw == 0.0);
}

TEST_CASE("anchors tile every level") {
  const auto anchors = make_anchors(128);
  CHECK(anchors.size() == 3 * (1024 + 256 + 64 + 16 + 4));
  // First anchor: level P2, ratio 0.5, cell (0, 0): 16 * sqrt(2) wide.
  CHECK(anchors[0].cx() == doctest::Approx(2.0));
  CHECK(anchors[0].width() == doctest::Approx(16.0 * std::sqrt(2.0)));
  CHECK(anchors[0].height() == doctest::Approx(16.0 / std::sqrt(2.0)));
  // Last anchor: P6, ratio 2, cell (1, 1) at stride 64.
  CHECK(anchors.back().cx() == doctest::Approx(96.0));
  CHECK(anchors.back().height() == doctest::Approx(256.0 * std::sqrt(2.0)));
  for (const Box& a : anchors) CHECK(a.area() == doctest::Approx(a.width() * a.height()));
}

TEST_CASE("rpn_forward: shapes, oracle, and weight sharing") {
  Rng rng(2);
  ParameterStore store;
  init_rpn(store, 32, rng);
  for (auto& [name, t] : store)
    if (name.ends_with(".b")) store.assign(name, random_values(t.numel(), rng));
  FeaturePyramid p = random_pyramid(2, 32, 64, rng);
  // Swap in a 16x16 level to check the documented shape directly.
  FeaturePyramid q = random_pyramid(2, 32, 128, rng);
  q.levels[1] = Tensor({2, 32, 16, 16}, random_values(2 * 32 * 256, rng));
  RpnOutput out = rpn_forward(q, store);
  CHECK(out.objectness[1].shape() == Shape{2, 3, 16, 16});
  CHECK(out.deltas[1].shape() == Shape{2, 12, 16, 16});
  CHECK(out.anchors_per_image() == 4092);

  for (std::size_t l = 0; l < kLevels; ++l) {
    Tensor ref = conv2d(q.levels[l], store.get("rpn.cls.w"), store.get("rpn.cls.b"), 1, 1);
    for (std::size_t j = 0; j < ref.numel(); ++j) REQUIRE(out.objectness[l][j] == ref[j]);
    Tensor rref = conv2d(q.levels[l], store.get("rpn.reg.w"), store.get("rpn.reg.b"), 1, 1);
    for (std::size_t j = 0; j < rref.numel(); ++j) REQUIRE(out.deltas[l][j] == rref[j]);
  }

  // The same 8x8 map as P4 of a 128 image and as P3 of a 64 image.
  const Tensor x({2, 32, 8, 8}, random_values(2 * 32 * 64, rng));
  FeaturePyramid a = random_pyramid(2, 32, 128, rng);
  a.levels[2] = x;
  p.levels[1] = x;
  RpnOutput ra = rpn_forward(a, store), rp = rpn_forward(p, store);
  for (std::size_t j = 0; j < ra.objectness[2].numel(); ++j)
    REQUIRE(ra.objectness[2][j] == rp.objectness[1][j]);
  for (std::size_t j = 0; j < ra.deltas[2].numel(); ++j) REQUIRE(ra.deltas[2][j] == rp.deltas[1][j]);
}

TEST_CASE("RpnOutput gathers follow the anchor order") {
  // Encode (image, level, a, y, x) into each output value and read it back.
  RpnOutput r;
  const std::size_t B = 2;
  for (std::size_t l = 0; l < kLevels; ++l) {
    const std::size_t s = 128 >> (l + 2);
    std::vector<double> obj(B * 3 * s * s), reg(B * 12 * s * s);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t y = 0; y < s; ++y)
          for (std::size_t x = 0; x < s; ++x) {
            const double code = b * 1e6 + l * 1e5 + a * 1e4 + y * 100 + x;
            obj[((b * 3 + a) * s + y) * s + x] = code;
            for (std::size_t c = 0; c < 4; ++c)
              reg[((b * 12 + 4 * a + c) * s + y) * s + x] = code + c * 0.1;
          }
    r.objectness[l] = Tensor({B, 3, s, s}, obj);
    r.deltas[l] = Tensor({B, 12, s, s}, reg);
  }
  const auto anchors = make_anchors(128);
  std::vector<std::size_t> pick{0, 5, 1023, 1024, 3071, 3072, 4000, 4091};
  for (std::size_t b = 0; b < B; ++b) {
    Tensor lg = r.gather_logits(b, pick);
    Tensor dl = r.gather_deltas(b, pick);
    for (std::size_t k = 0; k < pick.size(); ++k) {
      const double code = lg[k] - b * 1e6;
      const std::size_t l = static_cast<std::size_t>(code / 1e5);
      const std::size_t y = static_cast<std::size_t>(std::fmod(code, 1e4)) / 100;
      const std::size_t x = static_cast<std::size_t>(std::fmod(code, 100.0));
      const double stride = static_cast<double>(level_stride(l));
      CHECK(anchors[pick[k]].cx() == doctest::Approx((x + 0.5) * stride));
      CHECK(anchors[pick[k]].cy() == doctest::Approx((y + 0.5) * stride));
      for (std::size_t c = 0; c < 4; ++c) CHECK(dl[k * 4 + c] == doctest::Approx(lg[k] + c * 0.1));
    }
  }
}

TEST_CASE("assign_anchors: labels follow the IoU table") {
  const Box gt{0, 0, 10, 10};
  const std::vector<Box> anchors{{0, 0, 10, 9}, {0, 0, 10, 5}, {20, 20, 30, 30}, {0, 0, 10, 10}};
  const std::vector<Box> truths{gt};
  // IoUs: 0.9, 0.5, 0, 1.0
  AnchorAssignment a = assign_anchors(std::span(anchors).first(3), truths);
  CHECK(a.labels == std::vector<int>{1, kIgnore, 0});
  AnchorAssignment b = assign_anchors(anchors, truths);
  CHECK(b.labels == std::vector<int>{1, kIgnore, 0, 1});
  CHECK(b.positives == 2);
  CHECK(b.negatives == 1);

  // Best anchor of a box is positive even below the threshold.
  const std::vector<Box> weak{{0, 0, 10, 5}, {0, 0, 10, 4}, {50, 50, 60, 60}};
  AnchorAssignment c = assign_anchors(weak, truths);
  CHECK(c.labels == std::vector<int>{1, kIgnore, 0});

  AnchorAssignment none = assign_anchors(anchors, {});
  for (int l : none.labels) CHECK(l == 0);
}

TEST_CASE("sample_anchors: balanced, bounded, deterministic") {
  AnchorAssignment a;
  a.labels.assign(200, 0);
  for (std::size_t i = 0; i < 40; ++i) a.labels[i * 5] = 1;
  for (std::size_t i = 0; i < 10; ++i) a.labels[i * 5 + 1] = kIgnore;
  Rng r1(3), r2(3);
  auto s = sample_anchors(a, 32, 0.5, r1);
  CHECK(s == sample_anchors(a, 32, 0.5, r2));
  CHECK(s.size() == 32);
  std::size_t pos = 0;
  for (std::size_t i : s) {
    CHECK(a.labels[i] != kIgnore);
    pos += a.labels[i] == 1;
  }
  CHECK(pos == 16);
  a.labels.assign(200, 0);
  a.labels[7] = 1;
  auto t = sample_anchors(a, 32, 0.5, r1);
  CHECK(t.size() == 32);
  CHECK(std::count(t.begin(), t.end(), 7u) == 1);
}

TEST_CASE("loss_total: hand values") {
  // p = (0.8, 0.3), p* = (1, 0); the positive anchor's deltas are off by
  // (0.5, 0, 2, 0): smooth L1 0.125 + 1.5.
  Tensor p({2}, {0.8, 0.3});
  Tensor t({2, 4}, {0.5, 0, 2, 0, 9, 9, 9, 9});
  Tensor ts({2, 4}, {0, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<int> labels{1, 0};
  const std::vector<std::uint8_t> all{1, 1};
  const double cls = -(std::log(0.8) + std::log(0.7)) / 2.0;
  CHECK(cls == doctest::Approx(0.28990925).epsilon(1e-8));
  CHECK(loss_total(p, labels, all, t, ts).item() == doctest::Approx(cls + 1.625).epsilon(1e-12));
  CHECK(loss_total(p, labels, all, t, ts, 2.0).item() ==
        doctest::Approx(cls + 3.25).epsilon(1e-12));

  // All negative: only the classification term.
  const std::vector<int> neg{0, 0};
  CHECK(loss_total(p, neg, all, t, ts).item() ==
        doctest::Approx(-(std::log(0.2) + std::log(0.7)) / 2.0).epsilon(1e-12));

  // Perfect predictions.
  Tensor perfect({2}, {1.0, 0.0});
  CHECK(loss_total(perfect, labels, all, ts, ts).item() < 1e-6);

  // Nothing selected.
  const std::vector<std::uint8_t> none{0, 0};
  CHECK(loss_total(p, labels, none, t, ts).item() == 0.0);

  const std::vector<int> ignored{kIgnore, 0};
  CHECK_THROWS_AS(loss_total(p, ignored, all, t, ts), Error);
  CHECK_THROWS_AS(loss_total(p, labels, all, Tensor({2, 3}), ts), Error);
}

TEST_CASE("loss_total: gradients match finite differences") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(8);
    Tensor logits = kgsc::testing::random_param({n}, rng, -2.0, 2.0);
    Tensor deltas = kgsc::testing::random_param({n, 4}, rng);
    std::vector<double> tv = random_values(n * 4, rng);
    // Keep every residual away from the smooth L1 kink at |x| = 1.
    for (std::size_t i = 0; i < tv.size(); ++i)
      if (std::abs(std::abs(deltas[i] - tv[i]) - 1.0) < 1e-2) tv[i] += 0.05;
    Tensor targets({n, 4}, tv);
    std::vector<int> labels(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      mask[i] = rng.bernoulli(0.8) ? 1 : 0;
    }
    auto f = [&] { return loss_total(sigmoid(logits), labels, mask, deltas, targets, 1.5); };
    CHECK(gradcheck(f, {logits, deltas}) <= 1e-4);
  }
}

TEST_CASE("nms: suppression rules") {
  std::vector<ScoredBox> one{{{0, 0, 5, 5}, 0.3}};
  CHECK(nms(one, 0.5) == std::vector<std::size_t>{0});
  std::vector<ScoredBox> twins{{{0, 0, 5, 5}, 0.3}, {{0, 0, 5, 5}, 0.9}};
  CHECK(nms(twins, 0.5) == std::vector<std::size_t>{1});
  CHECK(nms(std::vector<ScoredBox>{}, 0.5).empty());

  Rng rng(5);
  std::vector<ScoredBox> many;
  for (int i = 0; i < 200; ++i) many.push_back({random_box(rng, 60), rng.uniform()});
  auto kept = nms(many, 0.4);
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = i + 1; j < kept.size(); ++j)
      CHECK(iou(many[kept[i]].box, many[kept[j]].box) < 0.4);
  for (std::size_t i = 1; i < kept.size(); ++i)
    CHECK(many[kept[i - 1]].score >= many[kept[i]].score);
}

TEST_CASE("propose: decodes, clips, and ranks") {
  const auto anchors = make_anchors(128);
  RpnOutput r;
  for (std::size_t l = 0; l < kLevels; ++l) {
    const std::size_t s = 128 >> (l + 2);
    r.objectness[l] = Tensor({1, 3, s, s}, std::vector<double>(3 * s * s, -5.0));
    r.deltas[l] = Tensor({1, 12, s, s});
  }
  // Make anchor (P3, ratio 1, cell (5, 6)) the clear winner, shifted by +0.25 width.
  const std::size_t s3 = 16;
  const std::size_t anchor = 3 * 1024 + 1 * s3 * s3 + 5 * s3 + 6;
  auto obj = r.objectness[1].mutable_values();
  obj[1 * s3 * s3 + 5 * s3 + 6] = 4.0;
  auto reg = r.deltas[1].mutable_values();
  reg[(4 * 1 + 0) * s3 * s3 + 5 * s3 + 6] = 0.25;
  ProposalConfig cfg;
  cfg.post_nms = 5;
  auto props = propose(r, 0, anchors, 128, cfg);
  REQUIRE(props.size() == 5);
  const Box expect = decode_delta({0.25, 0, 0, 0}, anchors[anchor]);
  CHECK(props[0].box.x1 == doctest::Approx(expect.x1));
  CHECK(props[0].box.y2 == doctest::Approx(expect.y2));
  CHECK(props[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))));
  for (const ScoredBox& p : props) {
    CHECK(p.box.x1 >= 0.0);
    CHECK(p.box.y2 <= 128.0);
  }
  CHECK_THROWS_AS(propose(r, 0, std::span(anchors).first(10), 128), Error);
}

TEST_CASE("roi_level: canonical box sizes") {
  CHECK(roi_level(Box{0, 0, 16, 16}, 128) == 2);
  CHECK(roi_level(Box{0, 0, 32, 32}, 128) == 3);
  CHECK(roi_level(Box{0, 0, 64, 64}, 128) == 4);
  CHECK(roi_level(Box{0, 0, 128, 128}, 128) == 5);
  CHECK(roi_level(Box{0, 0, 2, 2}, 128) == 2);
  CHECK(roi_level(Box{0, 0, 1000, 1000}, 128) == 6);
}

TEST_CASE("roi_pool: aligned boxes read the sub-grid directly") {
  Rng rng(6);
  FeaturePyramid p = random_pyramid(2, 3, 128, rng);
  const std::size_t out = 4;
  for (std::size_t l = 0; l < 3; ++l) {
    const double st = static_cast<double>(level_stride(l));
    const std::size_t s = p.levels[l].dim(2);
    const std::size_t ax = 2, ay = 1;
    const Box box{st * ax, st * ay, st * (ax + out), st * (ay + out)};
    REQUIRE(roi_level(box, 128) == l + 2);
    const std::vector<Box> boxes{box};
    Tensor pooled = roi_pool(p, 1, boxes, out, 128);
    CHECK(pooled.shape() == Shape{1, 3 * out * out});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < out; ++j)
          CHECK(pooled[c * out * out + i * out + j] ==
                doctest::Approx(p.levels[l][((3 + c) * s + ay + i) * s + ax + j]).epsilon(1e-14));
  }
  CHECK(roi_pool(p, 0, std::vector<Box>{}, out, 128).shape() == Shape{0, 48});
}

TEST_CASE("roi_pool: gradient matches finite differences") {
  Rng rng(7);
  FeaturePyramid p = random_pyramid(1, 2, 128, rng, true);
  std::vector<Box> boxes;
  for (int i = 0; i < 4; ++i) boxes.push_back(random_box(rng, 100));
  boxes.push_back({100, 100, 140, 150});  // partly outside the image
  Tensor probe({boxes.size(), 2 * 9}, random_values(boxes.size() * 18, rng));
  auto f = [&] { return sum(mul(roi_pool(p, 0, boxes, 3, 128), probe)); };
  std::vector<Tensor> in(p.levels.begin(), p.levels.end());
  CHECK(gradcheck(f, in) <= 1e-6);
}

TEST_CASE("mean_average_precision: hand PR curves") {
  const Box g{10, 10, 30, 30}, miss{60, 60, 80, 80};
  const std::vector<GroundTruth> one{{0, 0, g}};
  CHECK(mean_average_precision(std::vector<Detection>{{0, 0, 0.9, g}}, one, 1).map == 1.0);
  CHECK(mean_average_precision(std::vector<Detection>{}, one, 1).map == 0.0);
  CHECK(mean_average_precision(std::vector<Detection>{{0, 0, 0.9, g}, {0, 0, 0.4, miss}}, one, 1)
            .map == 1.0);
  CHECK(mean_average_precision(std::vector<Detection>{{0, 0, 0.9, miss}, {0, 0, 0.4, g}}, one, 1)
            .map == 0.5);
  // Wrong image never matches.
  CHECK(mean_average_precision(std::vector<Detection>{{1, 0, 0.9, g}}, one, 1).map == 0.0);
}

TEST_CASE("mean_average_precision: classes without ground truth are excluded") {
  const Box a{0, 0, 10, 10}, b{20, 20, 40, 40};
  const std::vector<GroundTruth> truths{{0, 0, a}, {0, 2, b}, {1, 2, a}};
  const std::vector<Detection> dets{
      {0, 0, 0.8, a}, {0, 1, 0.7, b}, {0, 2, 0.6, b}, {1, 2, 0.9, Box{50, 50, 60, 60}}};
  ApResult r = mean_average_precision(dets, truths, 3);
  CHECK(r.ap[0] == 1.0);
  CHECK(std::isnan(r.ap[1]));
  // Class 2: FP (0.9) then TP (0.6): recall 0.5 at precision 0.5.
  CHECK(r.ap[2] == 0.25);
  CHECK(r.map == doctest::Approx(0.625));
  CHECK(r.gt_count == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("mean_average_precision: duplicates never help") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundTruth> truths;
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i) truths.push_back({rng.index(2), rng.index(3), random_box(rng)});
    for (int i = 0; i < 10; ++i)
      dets.push_back({rng.index(2), rng.index(3), rng.uniform(), random_box(rng)});
    for (const GroundTruth& t : truths)
      if (rng.bernoulli(0.6)) dets.push_back({t.image, t.category, rng.uniform(), t.box});
    const ApResult base = mean_average_precision(dets, truths, 3);
    CHECK(base.map >= 0.0);
    CHECK(base.map <= 1.0);
    auto more = dets;
    more.push_back(dets[rng.index(dets.size())]);
    CHECK(mean_average_precision(more, truths, 3).map <= base.map + 1e-15);
  }
}

TEST_CASE("detections CSV export") {
  std::ostringstream out;
  const std::vector<Detection> d{{3, 1, 0.5, Box{1, 2, 3, 4}}};
  write_detections_csv(out, d);
  CHECK(out.str() == "image_id,class,score,x1,y1,x2,y2\n3,1,0.5,1,2,3,4\n");
}
