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

#include "kgsc/harness/model.hpp"

#include <algorithm>
#include <cctype>

#include "kgsc/core/error.hpp"

namespace kgsc::harness {

std::string to_string(Mode mode) { return mode == Mode::kMsed ? "MSED" : "MSED+KG"; }

Mode parse_mode(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (n == "MSED") return Mode::kMsed;
  if (n == "MSED+KG" || n == "MSED-KG") return Mode::kMsedKg;
  fail(ErrorKind::kConfig, "unknown mode '" + name + "' (expected MSED or MSED+KG)");
}

std::string file_tag(Mode mode) { return mode == Mode::kMsed ? "msed" : "msed-kg"; }

std::size_t ModelConfig::feature_dim() const {
  return extractor.pyramid_channels * roi_size * roi_size;
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "model: " + m); };
  if (classes == 0) bad("classes must be positive");
  if (extractor.pyramid_channels == 0 || extractor.stem_channels == 0) bad("channel counts must be positive");
  if (roi_size == 0 || head_hidden == 0 || node_dim == 0) bad("roi_size, head_hidden and node_dim must be positive");
  if (mode == Mode::kMsedKg && rgat_layers == 0) bad("MSED+KG needs at least one R-GAT layer");
  if (rpn_batch == 0 || roi_batch == 0) bad("rpn_batch and roi_batch must be positive");
  if (!(rpn_positive_fraction > 0.0 && rpn_positive_fraction <= 1.0)) bad("rpn_positive_fraction must lie in (0, 1]");
  if (!(ratio > 0.0 && ratio <= 1.0)) bad("ratio must lie in (0, 1]");
}

Model::Model(const ModelConfig& config, const std::vector<std::string>& category_names,
             const kg::EmbeddingTable* embeddings, std::uint64_t init_seed)
    : config_(config), names_(category_names) {
  config_.validate();
  if (names_.size() != config_.classes) {
    fail(ErrorKind::kConfig, "model has " + std::to_string(config_.classes) + " classes but " +
                                 std::to_string(names_.size()) + " category names");
  }
  if (config_.mode == Mode::kMsedKg) {
    if (embeddings == nullptr) fail(ErrorKind::kMissing, "MSED+KG mode needs knowledge-graph embeddings");
    if (embeddings->dim != config_.node_dim) {
      fail(ErrorKind::kConfig, "embedding dim " + std::to_string(embeddings->dim) +
                                   " differs from node_dim " + std::to_string(config_.node_dim));
    }
    embeddings_ = *embeddings;
  }

  rate_ = codec::channels_for_ratio(config_.ratio, config_.image_side,
                                    codec::pyramid_sizes_for(config_.image_side));
  codec_.feature_channels = config_.extractor.pyramid_channels;
  codec_.code_channels = rate_.channels;
  codec_.encoder_blocks = config_.encoder_blocks;
  codec_.decoder_blocks = config_.decoder_blocks;
  codec_.slope = config_.extractor.slope;

  rgat_.feature_dim = config_.feature_dim();
  rgat_.node_dim = config_.node_dim;
  rgat_.layers = config_.rgat_layers;
  rgat_.slope = config_.extractor.slope;

  head_.in_dim = config_.feature_dim() + (config_.mode == Mode::kMsedKg ? config_.node_dim : 0);
  head_.hidden = config_.head_hidden;
  head_.classes = config_.classes + 1;
  head_.slope = config_.extractor.slope;

  anchors_ = detect::make_anchors(config_.image_side);

  Rng rng(init_seed);
  pyramid::init_extractor(store_, config_.extractor, rng);
  codec::init_codec(store_, codec_, rng);
  detect::init_rpn(store_, config_.extractor.pyramid_channels, rng);
  if (config_.mode == Mode::kMsedKg) {
    fusion::init_initial_head(store_, config_.feature_dim(), config_.classes + 1, rng);
    fusion::init_rgat(store_, rgat_, rng);
  }
  fusion::init_final_head(store_, head_, rng);
}

codec::EncodedPyramid Model::encode(const Tensor& images) const {
  return codec::encode(pyramid::extract(images, store_, config_.extractor), store_, codec_);
}

pyramid::FeaturePyramid Model::receive(const codec::EncodedPyramid& encoded,
                                       const channel::ChannelConfig& channel,
                                       codec::TransmitReport* report) const {
  codec::TransmitOptions options;
  options.per_scale = config_.per_scale;
  return codec::decode(codec::transmit_pyramid(encoded, channel, options, report), store_, codec_);
}

Model::Classified Model::classify(const Tensor& pooled) const {
  Classified out;
  if (config_.mode == Mode::kMsed) {
    out.final_logits = fusion::final_logits(Tensor{}, pooled, store_, head_);
    return out;
  }
  out.initial_logits = fusion::initial_logits(pooled, store_);
  const Tensor confidences = softmax_rows(out.initial_logits).detach();
  const fusion::WeightedGraph graph =
      fusion::build_weighted_graph(pooled, confidences, embeddings_, names_, config_.graph);
  ++graphs_built_;
  const Tensor enhanced = fusion::rgat_forward(graph, store_, rgat_);
  out.final_logits = fusion::final_logits(enhanced, pooled, store_, head_);
  return out;
}

LossParts Model::loss(const pyramid::FeaturePyramid& decoded, std::span<const Scene> scenes,
                      Rng& rng) const {
  const std::size_t batch = decoded.batch();
  if (scenes.size() != batch) {
    fail(ErrorKind::kShape, std::to_string(scenes.size()) + " scenes for a batch of " +
                                std::to_string(batch));
  }
  const detect::RpnOutput rpn = detect::rpn_forward(decoded, store_);
  const auto inv_batch = 1.0 / static_cast<double>(batch);
  const auto background = static_cast<int>(config_.classes);

  LossParts parts;
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::vector<detect::Box> truths = boxes_of(scenes[i]);

    // Region proposal objective over a sampled anchor subset.
    const detect::AnchorAssignment assignment = detect::assign_anchors(anchors_, truths);
    const std::vector<std::size_t> sampled = detect::sample_anchors(
        assignment, config_.rpn_batch, config_.rpn_positive_fraction, rng);
    std::vector<int> labels;
    std::vector<double> targets(sampled.size() * 4, 0.0);
    for (std::size_t j = 0; j < sampled.size(); ++j) {
      const std::size_t a = sampled[j];
      labels.push_back(assignment.labels[a]);
      if (assignment.labels[a] == 1) {
        const detect::Delta d = detect::encode_delta(truths[assignment.match[a]], anchors_[a]);
        targets[4 * j] = d.tx;
        targets[4 * j + 1] = d.ty;
        targets[4 * j + 2] = d.tw;
        targets[4 * j + 3] = d.th;
      }
    }
    const std::vector<std::uint8_t> mask(sampled.size(), 1);
    const Tensor rpn_loss = detect::loss_total(
        sigmoid(rpn.gather_logits(i, sampled)), labels, mask, rpn.gather_deltas(i, sampled),
        Tensor({sampled.size(), 4}, std::move(targets)), config_.rpn_lambda);
    total = add(total, scale(rpn_loss, inv_batch));
    parts.rpn += rpn_loss.item() * inv_batch;

    // Classifier objective over proposals plus the ground-truth boxes.
    std::vector<detect::Box> candidates = truths;
    {
      NoGradGuard no_grad;
      for (const auto& p : detect::propose(rpn, i, anchors_, config_.image_side, config_.train_proposals)) {
        candidates.push_back(p.box);
      }
    }
    std::vector<std::size_t> fg, bg;
    std::vector<int> cand_label(candidates.size(), background);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      double best = 0.0;
      for (std::size_t t = 0; t < truths.size(); ++t) {
        const double v = detect::iou(candidates[c], truths[t]);
        if (v > best) {
          best = v;
          if (v >= config_.roi_positive_iou) {
            cand_label[c] = static_cast<int>(scenes[i].objects[t].category);
          }
        }
      }
      (cand_label[c] == background ? bg : fg).push_back(c);
    }
    std::shuffle(fg.begin(), fg.end(), rng.engine());
    std::shuffle(bg.begin(), bg.end(), rng.engine());
    fg.resize(std::min(fg.size(), config_.roi_batch * 3 / 4));
    bg.resize(std::min(bg.size(), config_.roi_batch - fg.size()));
    std::vector<std::size_t> chosen = fg;
    chosen.insert(chosen.end(), bg.begin(), bg.end());
    std::sort(chosen.begin(), chosen.end());

    std::vector<detect::Box> boxes;
    std::vector<int> roi_labels;
    for (std::size_t c : chosen) {
      boxes.push_back(candidates[c]);
      roi_labels.push_back(cand_label[c]);
    }
    const Tensor pooled = detect::roi_pool(decoded, i, boxes, config_.roi_size, config_.image_side);
    const Classified cls = classify(pooled);
    if (cls.initial_logits.defined()) {
      const Tensor l = softmax_cross_entropy(cls.initial_logits, roi_labels);
      total = add(total, scale(l, inv_batch));
      parts.initial += l.item() * inv_batch;
    }
    const Tensor l = softmax_cross_entropy(cls.final_logits, roi_labels);
    total = add(total, scale(l, inv_batch));
    parts.final += l.item() * inv_batch;
  }
  parts.total = total;
  return parts;
}

std::vector<detect::Detection> Model::detect(const pyramid::FeaturePyramid& decoded,
                                             std::size_t first_image) const {
  NoGradGuard no_grad;
  const detect::RpnOutput rpn = detect::rpn_forward(decoded, store_);
  const std::size_t K = config_.classes;
  std::vector<detect::Detection> out;
  for (std::size_t i = 0; i < decoded.batch(); ++i) {
    const auto proposals =
        detect::propose(rpn, i, anchors_, config_.image_side, config_.eval_proposals);
    if (proposals.empty()) continue;
    std::vector<detect::Box> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    const Tensor pooled = detect::roi_pool(decoded, i, boxes, config_.roi_size, config_.image_side);
    const Tensor probs = softmax_rows(classify(pooled).final_logits);
    const auto pv = probs.values();

    std::vector<detect::Detection> image_dets;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<detect::ScoredBox> cands;
      for (std::size_t p = 0; p < boxes.size(); ++p) {
        const double s = pv[p * (K + 1) + k];
        if (s >= config_.score_threshold) cands.push_back({boxes[p], s});
      }
      for (std::size_t keep : detect::nms(cands, config_.class_nms_iou)) {
        image_dets.push_back({first_image + i, k, cands[keep].score, cands[keep].box});
      }
    }
    std::stable_sort(image_dets.begin(), image_dets.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    if (image_dets.size() > config_.max_detections) image_dets.resize(config_.max_detections);
    out.insert(out.end(), image_dets.begin(), image_dets.end());
  }
  return out;
}

}  // namespace kgsc::harness
