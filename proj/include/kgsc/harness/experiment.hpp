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

// Training, evaluation sweeps and CSV reports over the synthetic world.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgsc/codec/codec.hpp"
#include "kgsc/harness/config.hpp"
#include "kgsc/harness/model.hpp"

namespace kgsc::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kProtocol = "toy-world";

// Builds the world's knowledge graph, trains embeddings on metapath walks
// category -> context -> category and writes both under out_dir/kg.
kg::EmbeddingTable embed_kg(const RunConfig& config);

// Loads embeddings when the mode needs them (nullopt for MSED).
std::optional<kg::EmbeddingTable> embeddings_for(const RunConfig& config, Mode mode);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double snr_db = 0.0;
  double loss = 0.0;
  double rpn = 0.0;
  double initial = 0.0;
  double final = 0.0;
};

class Trainer {
 public:
  Trainer(const RunConfig& config, Mode mode, const Ratio& ratio,
          const kg::EmbeddingTable* embeddings);

  std::size_t steps_per_epoch() const;
  std::size_t total_steps() const;
  std::size_t steps_done() const { return step_; }
  bool finished() const { return step_ >= total_steps(); }

  // Runs the next step; every random draw derives from (train.seed, step),
  // so a restored trainer reproduces the same step exactly.
  StepLog step();

  // Parameters, optimizer moments and the step counter.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  Model& model() { return model_; }
  const Model& model() const { return model_; }

 private:
  RunConfig config_;
  Mode mode_;
  Ratio ratio_;
  WorldSpec world_;
  std::vector<Scene> scenes_;
  Model model_;
  Adam adam_;
  std::size_t step_ = 0;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::filesystem::path checkpoint;
  std::size_t steps = 0;
};

// Trains to completion (or train.max_steps), resuming from an existing
// checkpoint at the configured path when `resume` is set. Non-finite loss
// aborts with kNumeric.
TrainResult train(const RunConfig& config, Mode mode, const Ratio& ratio, bool resume = true);

// A trained model loaded from its checkpoint; kMissing when absent.
std::unique_ptr<Model> load_model(const RunConfig& config, Mode mode, const Ratio& ratio);

struct EvalRow {
  Mode mode = Mode::kMsed;
  channel::ChannelKind channel = channel::ChannelKind::kAwgn;
  Ratio ratio;
  codec::RateConfig rate;
  double snr_db = 0.0;
  std::uint64_t seed = 0;  // index into the configured evaluation seed streams
  detect::ApResult ap;
};

// Evaluation set for one model: scenes, ground truth and cached encoder
// outputs, so channel realizations only rerun the receiver side.
class Evaluator {
 public:
  Evaluator(const RunConfig& config, const Model& model);

  detect::ApResult evaluate(channel::ChannelKind kind, double snr_db, std::uint64_t seed) const;
  std::vector<detect::Detection> detections(channel::ChannelKind kind, double snr_db,
                                            std::uint64_t seed) const;
  const std::vector<detect::GroundTruth>& truths() const { return truths_; }

 private:
  const RunConfig& config_;
  const Model& model_;
  std::vector<Scene> scenes_;
  std::vector<detect::GroundTruth> truths_;
  std::vector<codec::EncodedPyramid> encoded_;
};

// Rows ordered by (mode, channel, snr, seed) for the configured ratio.
std::vector<EvalRow> sweep_snr(const RunConfig& config);
// Rows ordered by (mode, ratio, seed) at eval.rate_snr_db on config.channel.kind.
std::vector<EvalRow> sweep_rate(const RunConfig& config);

void write_rows_csv(std::ostream& out, const std::vector<EvalRow>& rows,
                    const std::vector<std::string>& category_names);

struct ComplexityRow {
  Mode mode = Mode::kMsed;
  Ratio ratio;
  codec::Complexity counts;
};

// Exact parameter and operation counts of one single-image inference pass,
// from the untrained geometry.
std::vector<ComplexityRow> report_complexity(const RunConfig& config);
void write_complexity_csv(std::ostream& out, const std::vector<ComplexityRow>& rows);

}  // namespace kgsc::harness
