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

#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "kgsc/core/error.hpp"
#include "kgsc/harness/experiment.hpp"

using namespace kgsc;
using namespace kgsc::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kgsc_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny(const fs::path& dir) {
  spdlog::set_level(spdlog::level::warn);
  RunConfig c;
  c.out_dir = dir;
  c.world.train_scenes = 50;
  c.world.eval_scenes = 8;
  c.train.epochs = 1;
  c.train.log_every = 0;
  c.embed.options.epochs = 5;
  c.eval.batch_size = 4;
  return c;
}

std::string csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  write_rows_csv(out, rows, WorldSpec::toy().category_names());
  return out.str();
}

}  // namespace

TEST_CASE("one epoch on 50 scenes lowers the loss") {
  TempDir tmp("smoke");
  const RunConfig c = tiny(tmp.path);
  embed_kg(c);
  const Ratio r = parse_ratio("1/6");
  const TrainResult result = train(c, Mode::kMsedKg, r, false);
  REQUIRE(result.log.size() == 13);
  CHECK(result.steps == 13);
  CHECK(fs::exists(result.checkpoint));
  CHECK(fs::exists(c.train_log_path(Mode::kMsedKg, r)));
  auto avg = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += result.log[i].loss;
    return s / static_cast<double>(to - from);
  };
  CHECK(result.log.back().loss < result.log.front().loss);
  CHECK(avg(10, 13) < avg(0, 3));
  for (const auto& s : result.log) {
    CHECK(s.snr_db >= 0.0);
    CHECK(s.snr_db <= 20.0);
    CHECK(s.initial > 0.0);
  }
  // A second call resumes at the end and has nothing left to do.
  CHECK(train(c, Mode::kMsedKg, r, true).log.empty());
}

TEST_CASE("resuming from a checkpoint reproduces the next step bit-identically") {
  TempDir tmp("resume");
  fs::create_directories(tmp.path);
  RunConfig c = tiny(tmp.path);
  const kg::EmbeddingTable table = embed_kg(c);
  const Ratio r = parse_ratio("1/12");
  Trainer a(c, Mode::kMsedKg, r, &table);
  for (int i = 0; i < 3; ++i) a.step();
  const fs::path ckpt = tmp.path / "mid.ckpt";
  a.save(ckpt);
  const StepLog next = a.step();

  Trainer b(c, Mode::kMsedKg, r, &table);
  b.load(ckpt);
  CHECK(b.steps_done() == 3);
  const StepLog replay = b.step();
  CHECK(replay.loss == next.loss);
  CHECK(replay.snr_db == next.snr_db);
  for (const auto& [name, t] : a.model().params()) {
    const auto& u = b.model().params().get(name);
    REQUIRE(t.numel() == u.numel());
    bool same = true;
    for (std::size_t i = 0; i < t.numel(); ++i) same = same && t[i] == u[i];
    CHECK_MESSAGE(same, name);
  }

  Trainer wrong_mode(c, Mode::kMsed, r, nullptr);
  CHECK_THROWS_AS(wrong_mode.load(ckpt), Error);
}

TEST_CASE("MSED mode never builds a weighted graph") {
  TempDir tmp("graph");
  const RunConfig c = tiny(tmp.path);
  const WorldSpec spec = c.world.spec();
  const Model msed(c.model_for(Mode::kMsed, c.ratio), spec.category_names(), nullptr, 1);
  const kg::EmbeddingTable table = [&] {
    kg::EmbeddingTable t;
    t.dim = c.model.node_dim;
    t.names = spec.category_names();
    t.vectors.assign(t.names.size(), std::vector<double>(t.dim, 0.5));
    return t;
  }();
  const Model kgm(c.model_for(Mode::kMsedKg, c.ratio), spec.category_names(), &table, 1);

  const Dataset ds = generate_dataset(spec, 2);
  const Tensor images = render_batch(spec, ds.scenes);
  const auto ch = channel::ChannelConfig::from_snr_db(channel::ChannelKind::kAwgn, 10, 1, 3);
  for (const Model* m : {&msed, &kgm}) {
    const auto decoded = m->receive(m->encode(images), ch);
    Rng rng(4);
    m->loss(decoded, ds.scenes, rng);
    m->detect(decoded, 0);
  }
  CHECK(msed.graphs_built() == 0);
  CHECK(kgm.graphs_built() > 0);
  CHECK_FALSE(msed.params().contains("fusion.initial.w"));
  CHECK(kgm.params().contains("fusion.rgat0.pp.a"));
  CHECK_THROWS_AS(Model(c.model_for(Mode::kMsedKg, c.ratio), spec.category_names(), nullptr, 1),
                  Error);
}

TEST_CASE("sweeps: row counts, accounting and byte-identical CSVs") {
  TempDir tmp("sweep");
  RunConfig c = tiny(tmp.path);
  c.train.max_steps = 2;
  embed_kg(c);
  c.eval.ratios = {parse_ratio("1/6"), parse_ratio("1/12")};
  for (Mode m : {Mode::kMsed, Mode::kMsedKg}) {
    for (const Ratio& r : c.eval.ratios) train(c, m, r, false);
  }
  c.eval.seeds = 3;
  const auto rows = sweep_snr(c);
  CHECK(rows.size() == 18);
  const std::string first = csv(rows);
  CHECK(csv(sweep_snr(c)) == first);
  c.eval.workers = 3;
  CHECK(csv(sweep_snr(c)) == first);
  std::istringstream lines(first);
  std::string header;
  std::getline(lines, header);
  CHECK(header.rfind("schema_version,protocol,mode,channel,requested_R,achieved_R,C,k,n,snr_db,seed,mAP,AP_square", 0) == 0);

  c.eval.modes = {Mode::kMsedKg};
  const auto rate_rows = sweep_rate(c);
  CHECK(rate_rows.size() == 2 * c.eval.seeds);
  for (const auto& row : rate_rows) {
    const auto expect = codec::channels_for_ratio(row.ratio.value, 128, codec::pyramid_sizes_for(128));
    CHECK(row.rate.channels == expect.channels);
    CHECK(row.rate.k == expect.k);
    CHECK(row.rate.achieved == static_cast<double>(expect.k) / static_cast<double>(expect.n));
    CHECK(row.snr_db == 0.0);
  }
  CHECK(rate_rows.front().rate.channels == 48);
  CHECK(rate_rows.back().rate.channels == 24);

  c.eval.ratios = {parse_ratio("1/24")};
  try {
    sweep_rate(c);
    FAIL("expected a missing checkpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissing);
  }
}

TEST_CASE("complexity report: KG adds parameters, counts ignore seeds") {
  TempDir tmp("ops");
  RunConfig c = tiny(tmp.path);
  const auto rows = report_complexity(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mode == Mode::kMsed);
  CHECK(rows[1].counts.parameters > rows[0].counts.parameters);
  CHECK(rows[1].counts.multiplications > rows[0].counts.multiplications);
  c.train.init_seed = 999;
  const auto again = report_complexity(c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].counts.parameters == rows[i].counts.parameters);
    CHECK(again[i].counts.additions == rows[i].counts.additions);
    CHECK(again[i].counts.multiplications == rows[i].counts.multiplications);
  }
  std::ostringstream out;
  write_complexity_csv(out, rows);
  CHECK(out.str().rfind("schema_version,protocol,mode,requested_R,parameters,additions,multiplications\n", 0) == 0);
}

TEST_CASE("non-finite loss aborts training with a numeric error") {
  TempDir tmp("diverge");
  RunConfig c = tiny(tmp.path);
  c.train.learning_rate = 1e30;
  c.train.max_steps = 6;
  try {
    train(c, Mode::kMsed, c.ratio, false);
    FAIL("expected divergence");
  } catch (const Error& e) {
    INFO(std::string(e.what()));
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("diverged at step") != std::string::npos);
  }
}

TEST_CASE("MSED+KG without embeddings is a missing-artifact error") {
  TempDir tmp("noemb");
  const RunConfig c = tiny(tmp.path);
  try {
    train(c, Mode::kMsedKg, c.ratio, false);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissing);
  }
}
