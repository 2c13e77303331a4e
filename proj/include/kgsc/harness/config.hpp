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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kgsc/channel/channel.hpp"
#include "kgsc/harness/model.hpp"
#include "kgsc/harness/world.hpp"
#include "kgsc/kg/graph.hpp"

namespace kgsc::harness {

// A bandwidth compression ratio with the spelling it was given in ("1/6").
struct Ratio {
  double value = 0.0;
  std::string label;

  bool operator==(const Ratio& o) const { return value == o.value && label == o.label; }
};

Ratio parse_ratio(const std::string& text);  // "a/b" or a decimal in (0, 1]

struct WorldConfig {
  std::uint64_t seed = 7;
  std::size_t scene_size = 128;
  std::size_t glyph_min = 14;
  std::size_t glyph_max = 28;
  double color_jitter = 0.06;
  double background_noise = 0.05;
  std::size_t train_scenes = 2000;
  std::size_t eval_scenes = 400;
  std::uint64_t eval_first_id = 1000000;  // eval ids never collide with training ids

  WorldSpec spec() const;
};

struct EmbedConfig {
  kg::EmbeddingOptions options{32, 3, 5, 50, 0.025, 17};
  std::size_t walk_length = 20;
  std::size_t walks_per_node = 20;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
  std::uint64_t seed = 11;
  std::uint64_t init_seed = 13;
  std::size_t max_steps = 0;  // 0: run every epoch
  std::size_t log_every = 50;
};

struct ChannelSettings {
  channel::ChannelKind kind = channel::ChannelKind::kAwgn;
  double power = 1.0;
  bool equalize = true;
};

struct EvalConfig {
  std::vector<Mode> modes{Mode::kMsed, Mode::kMsedKg};
  std::vector<channel::ChannelKind> channels{channel::ChannelKind::kAwgn};
  std::vector<double> snr_db{0.0, 10.0, 20.0};
  std::vector<Ratio> ratios{{1.0 / 6.0, "1/6"}, {1.0 / 12.0, "1/12"}, {1.0 / 24.0, "1/24"}};
  std::size_t seeds = 5;
  std::uint64_t seed = 101;
  double rate_snr_db = 0.0;
  double iou = 0.5;
  std::size_t batch_size = 8;
  std::size_t workers = 1;
};

struct RunConfig {
  WorldConfig world;
  ModelConfig model;
  Ratio ratio{1.0 / 6.0, "1/6"};  // rate of the model being trained / evaluated
  ChannelSettings channel;
  TrainConfig train;
  EmbedConfig embed;
  EvalConfig eval;
  std::filesystem::path out_dir = "kgsc_out";

  std::filesystem::path triples_path() const;
  std::filesystem::path embeddings_path() const;
  std::filesystem::path checkpoint_path(Mode mode, const Ratio& ratio) const;
  std::filesystem::path train_log_path(Mode mode, const Ratio& ratio) const;

  // Model geometry for (mode, ratio); world-derived fields filled in.
  ModelConfig model_for(Mode mode, const Ratio& ratio) const;

  // Throws kConfig on invalid values and kIo when out_dir cannot be created
  // or written.
  void validate() const;
  void ensure_output_dir() const;
};

// INI text: [section] headers and key = value lines; '#' or ';' comments.
// Unknown sections or keys are rejected. Keys absent from the file keep
// their defaults; out_dir falls back to default_out_dir when unset.
RunConfig parse_config(std::istream& in, const std::string& source,
                       const std::filesystem::path& default_out_dir);
RunConfig load_config(const std::filesystem::path& path,
                      const std::filesystem::path& default_out_dir);
void write_config(std::ostream& out, const RunConfig& config);

// Applies one "section.key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

}  // namespace kgsc::harness
