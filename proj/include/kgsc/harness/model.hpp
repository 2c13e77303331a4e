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

#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kgsc/codec/codec.hpp"
#include "kgsc/detect/detector.hpp"
#include "kgsc/fusion/fusion.hpp"
#include "kgsc/harness/world.hpp"

namespace kgsc::harness {

enum class Mode { kMsed, kMsedKg };

std::string to_string(Mode mode);  // "MSED" / "MSED+KG"
Mode parse_mode(const std::string& name);
std::string file_tag(Mode mode);   // "msed" / "msed-kg"

struct ModelConfig {
  Mode mode = Mode::kMsedKg;
  double ratio = 1.0 / 6.0;
  std::size_t image_side = 128;
  std::size_t classes = 6;
  pyramid::ExtractorConfig extractor{16, 8, {8, 16, 16, 32, 32}, kDefaultLeakySlope};
  std::size_t encoder_blocks = 1;
  std::size_t decoder_blocks = 1;
  std::size_t roi_size = 4;
  std::size_t head_hidden = 64;
  std::size_t node_dim = 32;
  std::size_t rgat_layers = 2;
  fusion::GraphOptions graph;
  detect::ProposalConfig train_proposals{300, 0.7, 16, 2.0};
  detect::ProposalConfig eval_proposals{300, 0.7, 32, 2.0};
  std::size_t rpn_batch = 32;           // sampled anchors per image
  double rpn_positive_fraction = 0.5;
  std::size_t roi_batch = 24;           // proposals per image in the classifier loss
  double roi_positive_iou = 0.5;
  double rpn_lambda = 1.0;
  bool per_scale = true;
  double class_nms_iou = 0.5;
  double score_threshold = 0.01;
  std::size_t max_detections = 100;

  std::size_t feature_dim() const;  // pooled proposal feature length
  void validate() const;
};

struct LossParts {
  Tensor total;
  double rpn = 0.0;
  double initial = 0.0;  // zero in MSED mode
  double final = 0.0;
};

// Extractor, semantic codec, RPN and classification heads (plus the R-GAT in
// MSED+KG mode) over one ParameterStore.
class Model {
 public:
  // Embeddings (dim == node_dim, one per category) are required in MSED+KG mode.
  Model(const ModelConfig& config, const std::vector<std::string>& category_names,
        const kg::EmbeddingTable* embeddings, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const codec::RateConfig& rate() const { return rate_; }
  const codec::CodecConfig& codec_config() const { return codec_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  codec::EncodedPyramid encode(const Tensor& images) const;
  pyramid::FeaturePyramid receive(const codec::EncodedPyramid& encoded,
                                  const channel::ChannelConfig& channel,
                                  codec::TransmitReport* report = nullptr) const;

  // Scenes align with the batch dimension of `decoded`.
  LossParts loss(const pyramid::FeaturePyramid& decoded, std::span<const Scene> scenes,
                 Rng& rng) const;

  // Image ids in the result are first_image + batch index.
  std::vector<detect::Detection> detect(const pyramid::FeaturePyramid& decoded,
                                        std::size_t first_image) const;

  struct Classified {
    Tensor initial_logits;  // undefined in MSED mode
    Tensor final_logits;
  };
  // Heads (and in MSED+KG mode the fusion graph) over pooled proposals of
  // one image.
  Classified classify(const Tensor& pooled) const;

  // Weighted graphs constructed so far (stays zero in MSED mode).
  std::size_t graphs_built() const { return graphs_built_; }

 private:

  ModelConfig config_;
  std::vector<std::string> names_;
  kg::EmbeddingTable embeddings_;
  codec::RateConfig rate_;
  codec::CodecConfig codec_;
  fusion::RgatConfig rgat_;
  fusion::FinalHeadConfig head_;
  std::vector<detect::Box> anchors_;
  ParameterStore store_;
  mutable std::atomic<std::size_t> graphs_built_{0};
};

}  // namespace kgsc::harness
