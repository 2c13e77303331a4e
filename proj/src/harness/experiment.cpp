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

#include "kgsc/harness/experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "kgsc/core/error.hpp"

namespace kgsc::harness {
namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kStepStream = 2;
constexpr std::uint64_t kNoiseStream = 3;
constexpr std::uint64_t kWalkStream = 4;

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Runs fn(0..n-1) on up to `workers` threads; results must be written to
// per-index slots so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Scene> make_scenes(const WorldSpec& spec, std::size_t n, std::uint64_t first_id) {
  std::vector<Scene> scenes;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) scenes.push_back(generate_scene(spec, first_id + i));
  return scenes;
}

}  // namespace

kg::EmbeddingTable embed_kg(const RunConfig& config) {
  config.ensure_output_dir();
  const WorldSpec spec = config.world.spec();
  spec.validate();
  const kg::KnowledgeGraph graph = build_knowledge_graph(spec);
  save_triples(config.triples_path(), graph);
  const std::array<kg::EntityType, 3> metapath{kg::EntityType::kCategory, kg::EntityType::kContext,
                                               kg::EntityType::kCategory};
  const auto walks = kg::metapath_walks(graph, metapath, config.embed.walk_length,
                                        config.embed.walks_per_node,
                                        derive_seed(config.embed.options.seed, {kWalkStream}));
  kg::EmbeddingTable table = kg::train_embeddings(graph.entities(), walks, config.embed.options);
  kg::save_embeddings(config.embeddings_path(), table);
  spdlog::info("embedded {} entities from {} triples ({} walks) -> {}", graph.entity_count(),
               graph.triple_count(), walks.size(), config.embeddings_path().string());
  return table;
}

std::optional<kg::EmbeddingTable> embeddings_for(const RunConfig& config, Mode mode) {
  if (mode == Mode::kMsed) return std::nullopt;
  const auto path = config.embeddings_path();
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kMissing, "no knowledge-graph embeddings at " + path.string() +
                                  " (run embed-kg first)");
  }
  return kg::load_embeddings(path);
}

Trainer::Trainer(const RunConfig& config, Mode mode, const Ratio& ratio,
                 const kg::EmbeddingTable* embeddings)
    : config_(config),
      mode_(mode),
      ratio_(ratio),
      world_(config.world.spec()),
      scenes_(make_scenes(world_, config.world.train_scenes, 0)),
      model_(config.model_for(mode, ratio), world_.category_names(), embeddings,
             config.train.init_seed),
      adam_(AdamConfig{config.train.learning_rate, 0.9, 0.999, 1e-8}) {}

std::size_t Trainer::steps_per_epoch() const {
  return (scenes_.size() + config_.train.batch_size - 1) / config_.train.batch_size;
}

std::size_t Trainer::total_steps() const {
  const std::size_t all = steps_per_epoch() * config_.train.epochs;
  return config_.train.max_steps ? std::min(all, config_.train.max_steps) : all;
}

StepLog Trainer::step() {
  const TrainConfig& tc = config_.train;
  const std::size_t spe = steps_per_epoch();
  StepLog log;
  log.step = step_;
  log.epoch = step_ / spe;

  std::vector<std::size_t> order(scenes_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(tc.seed, {kShuffleStream, log.epoch}));
  std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
  const std::size_t begin = (step_ % spe) * tc.batch_size;
  const std::size_t end = std::min(begin + tc.batch_size, scenes_.size());
  std::vector<Scene> batch;
  for (std::size_t i = begin; i < end; ++i) batch.push_back(scenes_[order[i]]);

  Rng rng(derive_seed(tc.seed, {kStepStream, step_}));
  log.snr_db = rng.uniform(tc.snr_min_db, tc.snr_max_db);
  auto channel = channel::ChannelConfig::from_snr_db(config_.channel.kind, log.snr_db,
                                                     config_.channel.power,
                                                     derive_seed(tc.seed, {kNoiseStream, step_}));
  channel.equalize = config_.channel.equalize;

  ParameterStore& store = model_.params();
  store.zero_grad();
  const Tensor images = render_batch(world_, batch);
  LossParts parts;
  try {
    parts = model_.loss(model_.receive(model_.encode(images), channel), batch, rng);
  } catch (const Error& e) {
    // Degenerate activations (all-zero code blocks, deep fades on garbage)
    // after a bad update are reported as divergence.
    if (e.kind() != ErrorKind::kDomain && e.kind() != ErrorKind::kNumeric) throw;
    fail(ErrorKind::kNumeric, "training diverged at step " + std::to_string(step_) + ": " + e.what());
  }
  log.loss = parts.total.item();
  log.rpn = parts.rpn;
  log.initial = parts.initial;
  log.final = parts.final;
  if (!std::isfinite(log.loss)) {
    fail(ErrorKind::kNumeric, "training diverged at step " + std::to_string(step_) + " (epoch " +
                                  std::to_string(log.epoch) + ", snr " + num(log.snr_db) +
                                  " dB): loss " + num(log.loss) + ", rpn " + num(parts.rpn) +
                                  ", initial " + num(parts.initial) + ", final " +
                                  num(parts.final));
  }
  backward(parts.total);
  adam_.step(store);
  for (const auto& [name, t] : store) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) {
        fail(ErrorKind::kNumeric, "training diverged at step " + std::to_string(step_) +
                                      ": parameter " + name + " became non-finite (loss " +
                                      num(log.loss) + ", snr " + num(log.snr_db) + " dB)");
      }
    }
  }
  ++step_;
  return log;
}

void Trainer::save(const std::filesystem::path& path) const {
  TensorMap out = model_.params().snapshot();
  adam_.save_state(out);
  out["trainer.step"] = Tensor::scalar(static_cast<double>(step_));
  out["trainer.code_channels"] = Tensor::scalar(static_cast<double>(model_.rate().channels));
  out["trainer.mode"] = Tensor::scalar(mode_ == Mode::kMsed ? 0.0 : 1.0);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  save_checkpoint(tmp, out);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move checkpoint into place at " + path.string());
}

namespace {
void check_meta(const TensorMap& in, const Model& model, Mode mode,
                const std::filesystem::path& path) {
  auto get = [&](const std::string& key) {
    const auto it = in.find(key);
    if (it == in.end()) fail(ErrorKind::kParse, path.string() + ": missing " + key);
    return it->second.item();
  };
  if (get("trainer.mode") != (mode == Mode::kMsed ? 0.0 : 1.0)) {
    fail(ErrorKind::kConfig, path.string() + " was trained in the other mode");
  }
  if (get("trainer.code_channels") != static_cast<double>(model.rate().channels)) {
    fail(ErrorKind::kConfig, path.string() + " has a different code channel count than ratio " +
                                 num(model.config().ratio) + " implies");
  }
}
}  // namespace

void Trainer::load(const std::filesystem::path& path) {
  const TensorMap in = load_checkpoint(path);
  check_meta(in, model_, mode_, path);
  model_.params().restore(in);
  adam_.load_state(in);
  step_ = static_cast<std::size_t>(in.at("trainer.step").item());
}

TrainResult train(const RunConfig& config, Mode mode, const Ratio& ratio, bool resume) {
  config.ensure_output_dir();
  const auto embeddings = embeddings_for(config, mode);
  Trainer trainer(config, mode, ratio, embeddings ? &*embeddings : nullptr);
  TrainResult result;
  result.checkpoint = config.checkpoint_path(mode, ratio);
  const bool resuming = resume && std::filesystem::exists(result.checkpoint);
  if (resuming) {
    trainer.load(result.checkpoint);
    spdlog::info("resuming {} R={} at step {}", to_string(mode), ratio.label, trainer.steps_done());
  }
  std::ofstream log(config.train_log_path(mode, ratio), resuming ? std::ios::app : std::ios::trunc);
  if (!log) fail(ErrorKind::kIo, "cannot write " + config.train_log_path(mode, ratio).string());
  if (!resuming) log << "step,epoch,snr_db,loss,rpn,initial,final\n";

  const std::size_t total = trainer.total_steps();
  const std::size_t spe = trainer.steps_per_epoch();
  spdlog::info("training {} R={} (C={}, k={}): {} steps", to_string(mode), ratio.label,
               trainer.model().rate().channels, trainer.model().rate().k, total);
  double window = 0.0;
  std::size_t window_n = 0;
  while (!trainer.finished()) {
    const StepLog s = trainer.step();
    result.log.push_back(s);
    log << s.step << ',' << s.epoch << ',' << num(s.snr_db) << ',' << num(s.loss) << ','
        << num(s.rpn) << ',' << num(s.initial) << ',' << num(s.final) << '\n';
    window += s.loss;
    ++window_n;
    const bool epoch_end = trainer.steps_done() % spe == 0;
    if ((config.train.log_every && trainer.steps_done() % config.train.log_every == 0) ||
        epoch_end || trainer.finished()) {
      spdlog::info("{} R={} step {}/{} epoch {} loss {:.4f}", to_string(mode), ratio.label,
                   trainer.steps_done(), total, s.epoch, window / static_cast<double>(window_n));
      window = 0.0;
      window_n = 0;
    }
    if (epoch_end || trainer.finished()) trainer.save(result.checkpoint);
  }
  result.steps = trainer.steps_done();
  return result;
}

std::unique_ptr<Model> load_model(const RunConfig& config, Mode mode, const Ratio& ratio) {
  const auto path = config.checkpoint_path(mode, ratio);
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::kMissing, "no checkpoint for " + to_string(mode) + " at R=" + ratio.label +
                                  " (expected " + path.string() + ")");
  }
  const auto embeddings = embeddings_for(config, mode);
  auto model = std::make_unique<Model>(config.model_for(mode, ratio),
                                       config.world.spec().category_names(),
                                       embeddings ? &*embeddings : nullptr, config.train.init_seed);
  const TensorMap in = load_checkpoint(path);
  check_meta(in, *model, mode, path);
  model->params().restore(in);
  return model;
}

Evaluator::Evaluator(const RunConfig& config, const Model& model)
    : config_(config), model_(model) {
  const WorldSpec spec = config.world.spec();
  scenes_ = make_scenes(spec, config.world.eval_scenes, config.world.eval_first_id);
  truths_ = ground_truths(scenes_);
  NoGradGuard no_grad;
  const std::size_t b = config.eval.batch_size;
  for (std::size_t first = 0; first < scenes_.size(); first += b) {
    const std::size_t n = std::min(b, scenes_.size() - first);
    encoded_.push_back(
        model.encode(render_batch(spec, std::span<const Scene>(scenes_).subspan(first, n))));
  }
}

std::vector<detect::Detection> Evaluator::detections(channel::ChannelKind kind, double snr_db,
                                                     std::uint64_t seed) const {
  NoGradGuard no_grad;
  std::vector<detect::Detection> out;
  const std::uint64_t stream = derive_seed(config_.eval.seed, {seed});
  for (std::size_t b = 0; b < encoded_.size(); ++b) {
    auto channel = channel::ChannelConfig::from_snr_db(kind, snr_db, config_.channel.power,
                                                       derive_seed(stream, {b}));
    channel.equalize = config_.channel.equalize;
    const auto decoded = model_.receive(encoded_[b], channel);
    const auto dets = model_.detect(decoded, b * config_.eval.batch_size);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

detect::ApResult Evaluator::evaluate(channel::ChannelKind kind, double snr_db,
                                     std::uint64_t seed) const {
  const auto dets = detections(kind, snr_db, seed);
  return detect::mean_average_precision(dets, truths_, model_.config().classes, config_.eval.iou);
}

std::vector<EvalRow> sweep_snr(const RunConfig& config) {
  const EvalConfig& ec = config.eval;
  std::vector<EvalRow> rows;
  for (Mode mode : ec.modes) {
    const auto model = load_model(config, mode, config.ratio);
    const Evaluator evaluator(config, *model);
    std::vector<EvalRow> block;
    for (auto kind : ec.channels) {
      for (double snr : ec.snr_db) {
        for (std::size_t s = 0; s < ec.seeds; ++s) {
          block.push_back({mode, kind, config.ratio, model->rate(), snr, s, {}});
        }
      }
    }
    parallel_for(block.size(), ec.workers, [&](std::size_t i) {
      block[i].ap = evaluator.evaluate(block[i].channel, block[i].snr_db, block[i].seed);
    });
    for (const auto& r : block) {
      spdlog::info("{} {} R={} snr {} seed {}: mAP {:.4f}", to_string(r.mode),
                   channel::to_string(r.channel), r.ratio.label, r.snr_db, r.seed, r.ap.map);
    }
    rows.insert(rows.end(), block.begin(), block.end());
  }
  return rows;
}

std::vector<EvalRow> sweep_rate(const RunConfig& config) {
  const EvalConfig& ec = config.eval;
  std::vector<EvalRow> rows;
  for (Mode mode : ec.modes) {
    for (const Ratio& ratio : ec.ratios) {
      const auto model = load_model(config, mode, ratio);
      const Evaluator evaluator(config, *model);
      std::vector<EvalRow> block;
      for (std::size_t s = 0; s < ec.seeds; ++s) {
        block.push_back({mode, config.channel.kind, ratio, model->rate(), ec.rate_snr_db, s, {}});
      }
      parallel_for(block.size(), ec.workers, [&](std::size_t i) {
        block[i].ap = evaluator.evaluate(block[i].channel, block[i].snr_db, block[i].seed);
      });
      for (const auto& r : block) {
        spdlog::info("{} R={} (achieved {:.5f}) seed {}: mAP {:.4f}", to_string(r.mode),
                     r.ratio.label, r.rate.achieved, r.seed, r.ap.map);
      }
      rows.insert(rows.end(), block.begin(), block.end());
    }
  }
  return rows;
}

void write_rows_csv(std::ostream& out, const std::vector<EvalRow>& rows,
                    const std::vector<std::string>& category_names) {
  out << "schema_version,protocol,mode,channel,requested_R,achieved_R,C,k,n,snr_db,seed,mAP";
  for (const auto& name : category_names) out << ",AP_" << name;
  out << '\n';
  for (const EvalRow& r : rows) {
    out << kSchemaVersion << ',' << kProtocol << ',' << to_string(r.mode) << ','
        << channel::to_string(r.channel) << ',' << r.ratio.label << ',' << num(r.rate.achieved)
        << ',' << r.rate.channels << ',' << r.rate.k << ',' << r.rate.n << ',' << num(r.snr_db)
        << ',' << r.seed << ',' << num(r.ap.map);
    for (std::size_t c = 0; c < category_names.size(); ++c) {
      out << ',' << (c < r.ap.ap.size() ? num(r.ap.ap[c]) : std::string("nan"));
    }
    out << '\n';
  }
}

std::vector<ComplexityRow> report_complexity(const RunConfig& config) {
  const WorldSpec spec = config.world.spec();
  const std::size_t side = config.world.scene_size;
  std::vector<ComplexityRow> rows;
  for (Mode mode : config.eval.modes) {
    // Untrained weights: the counts depend on geometry only. MSED+KG gets a
    // placeholder embedding table of the right shape.
    kg::EmbeddingTable table;
    table.dim = config.model.node_dim;
    table.names = spec.category_names();
    table.vectors.assign(table.names.size(), std::vector<double>(table.dim, 1.0));
    const Model model(config.model_for(mode, config.ratio), spec.category_names(),
                      mode == Mode::kMsedKg ? &table : nullptr, config.train.init_seed);
    const ModelConfig& mc = model.config();

    // A fixed proposal set keeps the head workload independent of weights.
    std::vector<detect::Box> boxes;
    const std::size_t grid = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(mc.eval_proposals.post_nms))));
    const double cell = static_cast<double>(side) / static_cast<double>(grid);
    for (std::size_t i = 0; i < mc.eval_proposals.post_nms; ++i) {
      const double x = static_cast<double>(i % grid) * cell;
      const double y = static_cast<double>(i / grid) * cell;
      boxes.push_back({x, y, x + cell, y + cell});
    }
    const Tensor image({1, 3, side, side});
    const codec::Complexity counts = codec::count_complexity(
        [&] {
          NoGradGuard no_grad;
          const auto decoded = codec::decode(model.encode(image), model.params(), model.codec_config());
          detect::rpn_forward(decoded, model.params());
          model.classify(detect::roi_pool(decoded, 0, boxes, mc.roi_size, side));
        },
        model.params());
    rows.push_back({mode, config.ratio, counts});
  }
  return rows;
}

void write_complexity_csv(std::ostream& out, const std::vector<ComplexityRow>& rows) {
  out << "schema_version,protocol,mode,requested_R,parameters,additions,multiplications\n";
  for (const auto& r : rows) {
    out << kSchemaVersion << ',' << kProtocol << ',' << to_string(r.mode) << ',' << r.ratio.label
        << ',' << r.counts.parameters << ',' << r.counts.additions << ','
        << r.counts.multiplications << '\n';
  }
}

}  // namespace kgsc::harness
