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

// Region-proposal detector pieces: boxes and deltas, anchors over the
// pyramid, a shared RPN head, anchor labelling, the multi-task loss,
// proposal generation with NMS, RoI pooling, and mAP evaluation.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "kgsc/core/layers.hpp"
#include "kgsc/pyramid/extractor.hpp"

namespace kgsc::detect {

using pyramid::FeaturePyramid;
using pyramid::kLevels;

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2; }
};

// 0 for degenerate boxes.
double iou(const Box& a, const Box& b);

struct Delta {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

// Centre offsets scaled by anchor size, log size ratios.
Delta encode_delta(const Box& box, const Box& anchor);
Box decode_delta(const Delta& delta, const Box& anchor);

struct AnchorConfig {
  std::array<double, 3> ratios{0.5, 1.0, 2.0};  // height / width
  double size_per_stride = 4.0;                 // anchor side = size_per_stride * stride
};

inline constexpr std::size_t kAnchorsPerCell = 3;

// Level-major, then anchor, row, column: index matches the flattened RPN
// output of one image.
std::vector<Box> make_anchors(std::size_t image_side, const AnchorConfig& config = {});
std::size_t level_stride(std::size_t level_index);  // 4, 8, 16, 32, 64

void init_rpn(ParameterStore& store, std::size_t channels, Rng& rng);

struct RpnOutput {
  std::array<Tensor, kLevels> objectness;  // [B, A, s, s] logits
  std::array<Tensor, kLevels> deltas;      // [B, 4A, s, s], channel = 4 a + coordinate

  std::size_t batch() const { return objectness[0].dim(0); }
  std::size_t anchors_per_image() const;
  // Differentiable gathers for one image: logits [n] and deltas [n, 4].
  Tensor gather_logits(std::size_t image, std::span<const std::size_t> anchors) const;
  Tensor gather_deltas(std::size_t image, std::span<const std::size_t> anchors) const;
};

// One shared pair of 3x3 convolutions applied to every level.
RpnOutput rpn_forward(const FeaturePyramid& features, const ParameterStore& store);

inline constexpr int kIgnore = -1;

struct AnchorAssignment {
  std::vector<int> labels;          // 1, 0 or kIgnore
  std::vector<std::size_t> match;   // best ground truth per anchor
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Positive when IoU >= pos_iou with some box or when the anchor is the best
// match of a box; negative when the best IoU <= neg_iou; ignored otherwise.
AnchorAssignment assign_anchors(std::span<const Box> anchors, std::span<const Box> truths,
                                double pos_iou = 0.7, double neg_iou = 0.3);

// Up to `per_image` labelled anchors, at most half positive, drawn without
// replacement. Returns anchor indices sorted ascending.
std::vector<std::size_t> sample_anchors(const AnchorAssignment& assignment, std::size_t per_image,
                                        double positive_fraction, Rng& rng);

// (1/N_cls) sum log_loss(p, p*) + lambda (1/N_reg) sum p* smooth_l1(t, t*)
// over unmasked entries. probs [n], deltas and targets [n, 4]. N_cls is the
// unmasked count, N_reg the unmasked positive count; a zero count drops its
// term.
Tensor loss_total(const Tensor& probs, std::span<const int> labels,
                  std::span<const std::uint8_t> mask, const Tensor& deltas, const Tensor& targets,
                  double lambda = 1.0);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

// Greedy suppression in descending score order; returns kept indices.
std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold);

struct ProposalConfig {
  std::size_t pre_nms = 300;
  double nms_iou = 0.7;
  std::size_t post_nms = 32;
  double min_size = 2.0;
};

// Decodes and clips every anchor of one image, keeps the top pre_nms by
// objectness, suppresses, keeps post_nms.
std::vector<ScoredBox> propose(const RpnOutput& rpn, std::size_t image,
                               std::span<const Box> anchors, std::size_t image_side,
                               const ProposalConfig& config = {});

// floor(4 + log2(sqrt(area) / (image_side / 2))), clamped to [2, 6].
std::size_t roi_level(const Box& box, std::size_t image_side);

// Bilinear samples at the centres of an out x out grid over each box, read
// from the box's level; output [n, C * out * out], channel-major.
Tensor roi_pool(const FeaturePyramid& features, std::size_t image, std::span<const Box> boxes,
                std::size_t out_size, std::size_t image_side);

struct Detection {
  std::size_t image = 0;
  std::size_t category = 0;
  double score = 0.0;
  Box box;
};

struct GroundTruth {
  std::size_t image = 0;
  std::size_t category = 0;
  Box box;
};

struct ApResult {
  std::vector<double> ap;      // per class; NaN when the class has no ground truth
  std::vector<std::size_t> gt_count;
  double map = 0.0;            // over classes with ground truth; 0 when none
};

// Greedy, score-descending matching per class; all-point interpolated AP.
ApResult mean_average_precision(std::span<const Detection> detections,
                                std::span<const GroundTruth> truths, std::size_t num_classes,
                                double iou_threshold = 0.5);

void write_detections_csv(std::ostream& out, std::span<const Detection> detections);

}  // namespace kgsc::detect
