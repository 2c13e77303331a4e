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

#include "kgsc/detect/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "kgsc/core/error.hpp"

namespace kgsc::detect {

double iou(const Box& a, const Box& b) {
  const double aa = a.area(), ab = b.area();
  if (aa <= 0.0 || ab <= 0.0) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (aa + ab - inter);
}

Delta encode_delta(const Box& box, const Box& anchor) {
  const double wa = anchor.width(), ha = anchor.height();
  return {(box.cx() - anchor.cx()) / wa, (box.cy() - anchor.cy()) / ha,
          std::log(box.width() / wa), std::log(box.height() / ha)};
}

Box decode_delta(const Delta& d, const Box& anchor) {
  const double wa = anchor.width(), ha = anchor.height();
  const double cx = d.tx * wa + anchor.cx(), cy = d.ty * ha + anchor.cy();
  const double w = wa * std::exp(d.tw), h = ha * std::exp(d.th);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::size_t level_stride(std::size_t level_index) { return std::size_t{4} << level_index; }

std::vector<Box> make_anchors(std::size_t image_side, const AnchorConfig& config) {
  std::vector<Box> anchors;
  for (std::size_t l = 0; l < kLevels; ++l) {
    const std::size_t stride = level_stride(l);
    const std::size_t s = image_side / stride;
    const double side = config.size_per_stride * static_cast<double>(stride);
    for (double ratio : config.ratios) {
      const double w = side / std::sqrt(ratio), h = side * std::sqrt(ratio);
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const double cx = (static_cast<double>(x) + 0.5) * static_cast<double>(stride);
          const double cy = (static_cast<double>(y) + 0.5) * static_cast<double>(stride);
          anchors.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
    }
  }
  return anchors;
}

namespace {

constexpr std::size_t kA = kAnchorsPerCell;

ConvSpec cls_spec(std::size_t c) { return {c, kA, 3, 1, 1}; }
ConvSpec reg_spec(std::size_t c) { return {c, 4 * kA, 3, 1, 1}; }

// Flat positions of one anchor inside the concatenated per-level outputs.
struct AnchorIndexer {
  std::array<std::size_t, kLevels> size{};
  std::array<std::size_t, kLevels> per_image{};  // A s^2
  std::array<std::size_t, kLevels> obj_offset{};
  std::array<std::size_t, kLevels> reg_offset{};
  std::size_t batch = 0;

  explicit AnchorIndexer(const RpnOutput& r) {
    batch = r.batch();
    std::size_t oo = 0, ro = 0;
    for (std::size_t l = 0; l < kLevels; ++l) {
      size[l] = r.objectness[l].dim(2);
      per_image[l] = kA * size[l] * size[l];
      obj_offset[l] = oo;
      reg_offset[l] = ro;
      oo += r.objectness[l].numel();
      ro += r.deltas[l].numel();
    }
  }

  // (level, a, cell) of an anchor index within one image.
  std::array<std::size_t, 3> locate(std::size_t anchor) const {
    std::size_t l = 0;
    while (l < kLevels && anchor >= per_image[l]) anchor -= per_image[l++];
    if (l == kLevels) fail(ErrorKind::kDomain, "anchor index out of range");
    const std::size_t cells = size[l] * size[l];
    return {l, anchor / cells, anchor % cells};
  }
  std::size_t objectness(std::size_t b, std::size_t anchor) const {
    const auto [l, a, cell] = locate(anchor);
    const std::size_t cells = size[l] * size[l];
    return obj_offset[l] + (b * kA + a) * cells + cell;
  }
  std::size_t delta(std::size_t b, std::size_t anchor, std::size_t c) const {
    const auto [l, a, cell] = locate(anchor);
    const std::size_t cells = size[l] * size[l];
    return reg_offset[l] + (b * 4 * kA + 4 * a + c) * cells + cell;
  }
};

}  // namespace

void init_rpn(ParameterStore& store, std::size_t channels, Rng& rng) {
  init_conv(store, "rpn.cls", cls_spec(channels), rng);
  init_conv(store, "rpn.reg", reg_spec(channels), rng);
}

RpnOutput rpn_forward(const FeaturePyramid& features, const ParameterStore& store) {
  features.validate();
  const std::size_t c = features.channels();
  RpnOutput out;
  for (std::size_t l = 0; l < kLevels; ++l) {
    out.objectness[l] = apply_conv(store, "rpn.cls", cls_spec(c), features.levels[l]);
    out.deltas[l] = apply_conv(store, "rpn.reg", reg_spec(c), features.levels[l]);
  }
  return out;
}

std::size_t RpnOutput::anchors_per_image() const {
  std::size_t n = 0;
  for (const Tensor& t : objectness) n += t.numel();
  return n / batch();
}

Tensor RpnOutput::gather_logits(std::size_t image, std::span<const std::size_t> anchors) const {
  const AnchorIndexer ix(*this);
  std::vector<std::size_t> rows;
  rows.reserve(anchors.size());
  for (std::size_t a : anchors) rows.push_back(ix.objectness(image, a));
  Tensor flat = concat_flat(objectness);
  Tensor g = gather_rows(reshape(flat, {flat.numel(), 1}), rows);
  return reshape(g, {anchors.size()});
}

Tensor RpnOutput::gather_deltas(std::size_t image, std::span<const std::size_t> anchors) const {
  const AnchorIndexer ix(*this);
  std::vector<std::size_t> rows;
  rows.reserve(4 * anchors.size());
  for (std::size_t a : anchors)
    for (std::size_t c = 0; c < 4; ++c) rows.push_back(ix.delta(image, a, c));
  Tensor flat = concat_flat(deltas);
  Tensor g = gather_rows(reshape(flat, {flat.numel(), 1}), rows);
  return reshape(g, {anchors.size(), 4});
}

AnchorAssignment assign_anchors(std::span<const Box> anchors, std::span<const Box> truths,
                                double pos_iou, double neg_iou) {
  AnchorAssignment out;
  const std::size_t n = anchors.size(), m = truths.size();
  out.labels.assign(n, kIgnore);
  out.match.assign(n, 0);
  std::vector<double> best(n, 0.0);
  std::vector<double> best_for_truth(m, 0.0);
  std::vector<double> table(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double v = iou(anchors[i], truths[j]);
      table[i * m + j] = v;
      if (v > best[i]) {
        best[i] = v;
        out.match[i] = j;
      }
      best_for_truth[j] = std::max(best_for_truth[j], v);
    }
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i] >= pos_iou) {
      out.labels[i] = 1;
    } else if (best[i] <= neg_iou) {
      out.labels[i] = 0;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (best_for_truth[j] <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i)
      if (table[i * m + j] == best_for_truth[j]) {
        out.labels[i] = 1;
        out.match[i] = j;
      }
  }
  for (int l : out.labels) {
    out.positives += l == 1;
    out.negatives += l == 0;
  }
  return out;
}

std::vector<std::size_t> sample_anchors(const AnchorAssignment& assignment, std::size_t per_image,
                                        double positive_fraction, Rng& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    if (assignment.labels[i] == 1) pos.push_back(i);
    if (assignment.labels[i] == 0) neg.push_back(i);
  }
  auto take = [&](std::vector<std::size_t>& from, std::size_t count) {
    // Partial Fisher-Yates on our own engine keeps this reproducible.
    count = std::min(count, from.size());
    for (std::size_t i = 0; i < count; ++i) std::swap(from[i], from[i + rng.index(from.size() - i)]);
    from.resize(count);
  };
  take(pos, static_cast<std::size_t>(std::floor(positive_fraction * static_cast<double>(per_image))));
  take(neg, per_image - pos.size());
  std::vector<std::size_t> out = pos;
  out.insert(out.end(), neg.begin(), neg.end());
  std::sort(out.begin(), out.end());
  return out;
}

Tensor loss_total(const Tensor& probs, std::span<const int> labels,
                  std::span<const std::uint8_t> mask, const Tensor& deltas, const Tensor& targets,
                  double lambda) {
  const std::size_t n = probs.numel();
  if (labels.size() != n || mask.size() != n) {
    fail(ErrorKind::kShape, "loss_total: " + std::to_string(labels.size()) + " labels and " +
                                std::to_string(mask.size()) + " mask entries for " +
                                std::to_string(n) + " probabilities");
  }
  if (deltas.shape() != Shape{n, 4} || targets.shape() != Shape{n, 4}) {
    fail(ErrorKind::kShape, "loss_total: deltas " + shape_str(deltas.shape()) + " and targets " +
                                shape_str(targets.shape()) + " must be [" + std::to_string(n) +
                                ", 4]");
  }
  std::size_t n_cls = 0;
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (labels[i] != 0 && labels[i] != 1) {
      fail(ErrorKind::kDomain, "loss_total: unmasked anchor " + std::to_string(i) +
                                   " has label " + std::to_string(labels[i]));
    }
    ++n_cls;
    if (labels[i] == 1) positive.push_back(i);
  }
  Tensor total = Tensor::scalar(0.0);
  if (n_cls > 0) {
    total = scale(binary_log_loss(probs, labels, mask), 1.0 / static_cast<double>(n_cls));
  }
  if (!positive.empty() && lambda != 0.0) {
    Tensor reg = smooth_l1(gather_rows(deltas, positive), gather_rows(targets, positive));
    total = add(total, scale(reg, lambda / static_cast<double>(positive.size())));
  }
  return total;
}

std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept) {
      if (iou(boxes[i].box, boxes[k].box) >= iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

std::vector<ScoredBox> propose(const RpnOutput& rpn, std::size_t image,
                               std::span<const Box> anchors, std::size_t image_side,
                               const ProposalConfig& config) {
  const AnchorIndexer ix(rpn);
  const std::size_t n = rpn.anchors_per_image();
  if (anchors.size() != n) {
    fail(ErrorKind::kShape, "propose: " + std::to_string(anchors.size()) + " anchors for " +
                                std::to_string(n) + " RPN outputs");
  }
  std::vector<double> obj;
  std::vector<double> reg;
  for (std::size_t l = 0; l < kLevels; ++l) {
    obj.insert(obj.end(), rpn.objectness[l].values().begin(), rpn.objectness[l].values().end());
    reg.insert(reg.end(), rpn.deltas[l].values().begin(), rpn.deltas[l].values().end());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t top = std::min(config.pre_nms, n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = obj[ix.objectness(image, a)];
                      const double sb = obj[ix.objectness(image, b)];
                      return sa > sb || (sa == sb && a < b);
                    });
  const double clip = std::log(1000.0 / 16.0);
  const double side = static_cast<double>(image_side);
  std::vector<ScoredBox> candidates;
  for (std::size_t r = 0; r < top; ++r) {
    const std::size_t a = order[r];
    Delta d{reg[ix.delta(image, a, 0)], reg[ix.delta(image, a, 1)],
            std::min(reg[ix.delta(image, a, 2)], clip), std::min(reg[ix.delta(image, a, 3)], clip)};
    Box b = decode_delta(d, anchors[a]);
    b.x1 = std::clamp(b.x1, 0.0, side);
    b.x2 = std::clamp(b.x2, 0.0, side);
    b.y1 = std::clamp(b.y1, 0.0, side);
    b.y2 = std::clamp(b.y2, 0.0, side);
    if (b.width() < config.min_size || b.height() < config.min_size) continue;
    const double logit = obj[ix.objectness(image, a)];
    candidates.push_back({b, 1.0 / (1.0 + std::exp(-logit))});
  }
  std::vector<ScoredBox> out;
  for (std::size_t k : nms(candidates, config.nms_iou)) {
    if (out.size() == config.post_nms) break;
    out.push_back(candidates[k]);
  }
  return out;
}

std::size_t roi_level(const Box& box, std::size_t image_side) {
  const double a = std::max(box.area(), 1e-12);
  const double lvl =
      std::floor(4.0 + std::log2(std::sqrt(a) / (0.5 * static_cast<double>(image_side))));
  return static_cast<std::size_t>(std::clamp(lvl, 2.0, 6.0));
}

namespace {

struct Tap {
  std::size_t index[4];
  double weight[4];
};

}  // namespace

Tensor roi_pool(const FeaturePyramid& features, std::size_t image, std::span<const Box> boxes,
                std::size_t out_size, std::size_t image_side) {
  features.validate();
  if (image >= features.batch()) fail(ErrorKind::kDomain, "roi_pool: image index out of range");
  if (out_size == 0) fail(ErrorKind::kConfig, "roi_pool: output size must be positive");
  const std::size_t C = features.channels();
  const std::size_t grid = out_size * out_size;
  const std::size_t D = C * grid;

  // Per box: level and the bilinear taps of each grid cell (shared by all
  // channels, indices relative to the channel plane).
  struct Plan {
    std::size_t level;
    std::vector<Tap> taps;
  };
  auto plans = std::make_shared<std::vector<Plan>>();
  std::vector<double> out(boxes.size() * D);
  for (std::size_t n = 0; n < boxes.size(); ++n) {
    const Box& b = boxes[n];
    const std::size_t level = roi_level(b, image_side) - 2;
    const Tensor& f = features.levels[level];
    const std::size_t s = f.dim(2);
    const double stride = static_cast<double>(image_side) / static_cast<double>(s);
    Plan plan{level, std::vector<Tap>(grid)};
    for (std::size_t i = 0; i < out_size; ++i)
      for (std::size_t j = 0; j < out_size; ++j) {
        const double py = b.y1 + (static_cast<double>(i) + 0.5) * b.height() / out_size;
        const double px = b.x1 + (static_cast<double>(j) + 0.5) * b.width() / out_size;
        const double top = static_cast<double>(s - 1);
        const double fy = std::clamp(py / stride - 0.5, 0.0, top);
        const double fx = std::clamp(px / stride - 0.5, 0.0, top);
        const std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
        const std::size_t y1 = std::min(y0 + 1, s - 1), x1 = std::min(x0 + 1, s - 1);
        const double wy = fy - static_cast<double>(y0), wx = fx - static_cast<double>(x0);
        plan.taps[i * out_size + j] = {{y0 * s + x0, y0 * s + x1, y1 * s + x0, y1 * s + x1},
                                       {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx}};
      }
    const auto fv = f.values();
    for (std::size_t c = 0; c < C; ++c) {
      const double* plane = fv.data() + (image * C + c) * s * s;
      for (std::size_t g = 0; g < grid; ++g) {
        const Tap& t = plan.taps[g];
        out[n * D + c * grid + g] = t.weight[0] * plane[t.index[0]] + t.weight[1] * plane[t.index[1]] +
                                    t.weight[2] * plane[t.index[2]] + t.weight[3] * plane[t.index[3]];
      }
    }
    plans->push_back(std::move(plan));
  }
  std::array<std::size_t, kLevels> sizes = features.sizes();
  return make_op(
      {boxes.size(), D}, std::move(out),
      std::span<const Tensor>(features.levels.data(), kLevels),
      [plans, sizes, image, C, grid, D](std::span<const double> gy,
                                         std::span<std::vector<double>*> gin) {
        for (std::size_t n = 0; n < plans->size(); ++n) {
          const Plan& p = (*plans)[n];
          std::vector<double>* g = gin[p.level];
          if (!g) continue;
          const std::size_t s = sizes[p.level];
          for (std::size_t c = 0; c < C; ++c) {
            double* plane = g->data() + (image * C + c) * s * s;
            for (std::size_t q = 0; q < grid; ++q) {
              const double v = gy[n * D + c * grid + q];
              const Tap& t = p.taps[q];
              for (int k = 0; k < 4; ++k) plane[t.index[k]] += t.weight[k] * v;
            }
          }
        }
      });
}

ApResult mean_average_precision(std::span<const Detection> detections,
                                std::span<const GroundTruth> truths, std::size_t num_classes,
                                double iou_threshold) {
  ApResult r;
  r.ap.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  r.gt_count.assign(num_classes, 0);
  for (const GroundTruth& t : truths) {
    if (t.category >= num_classes) fail(ErrorKind::kDomain, "ground truth class out of range");
    ++r.gt_count[t.category];
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (r.gt_count[c] == 0) continue;
    std::vector<std::size_t> gts;
    for (std::size_t i = 0; i < truths.size(); ++i)
      if (truths[i].category == c) gts.push_back(i);
    std::vector<std::size_t> dets;
    for (std::size_t i = 0; i < detections.size(); ++i)
      if (detections[i].category == c) dets.push_back(i);
    std::stable_sort(dets.begin(), dets.end(), [&](std::size_t a, std::size_t b) {
      return detections[a].score > detections[b].score;
    });
    std::vector<bool> used(gts.size(), false);
    std::vector<double> recall, precision;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const Detection& d = detections[dets[k]];
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (truths[gts[g]].image != d.image) continue;
        const double v = iou(d.box, truths[gts[g]].box);
        if (v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best >= iou_threshold && !used[best_g]) {
        used[best_g] = true;
        ++tp;
      }
      recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    // All-point interpolation: precision envelope integrated over recall.
    for (std::size_t k = precision.size(); k-- > 1;)
      precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
      ap += (recall[k] - prev) * precision[k];
      prev = recall[k];
    }
    r.ap[c] = ap;
    total += ap;
    ++counted;
  }
  r.map = counted ? total / static_cast<double>(counted) : 0.0;
  return r;
}

void write_detections_csv(std::ostream& out, std::span<const Detection> detections) {
  out << "image_id,class,score,x1,y1,x2,y2\n";
  const auto old = out.precision(17);
  for (const Detection& d : detections)
    out << d.image << ',' << d.category << ',' << d.score << ',' << d.box.x1 << ',' << d.box.y1
        << ',' << d.box.x2 << ',' << d.box.y2 << '\n';
  out.precision(old);
}

}  // namespace kgsc::detect
