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

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "kgsc/core/alloc.hpp"
#include "kgsc/core/error.hpp"
#include "kgsc/harness/experiment.hpp"
#include "plot.hpp"

namespace {

using namespace kgsc;
using namespace kgsc::harness;

struct Globals {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

std::filesystem::path default_out_dir() {
  const char* env = std::getenv("KGSC_OUT_DIR");
  return env != nullptr && *env != '\0' ? std::filesystem::path(env) : "kgsc_out";
}

RunConfig resolve(const Globals& g) {
  RunConfig config;
  if (!g.config_path.empty()) {
    config = load_config(g.config_path, default_out_dir());
  } else {
    config.out_dir = default_out_dir();
  }
  for (const auto& o : g.overrides) apply_override(config, o);
  if (!g.out_dir.empty()) config.out_dir = g.out_dir;
  config.validate();
  config.ensure_output_dir();

  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(
      (config.out_dir / "kgsc.log").string());
  auto logger = std::make_shared<spdlog::logger>("kgsc", spdlog::sinks_init_list{console, file});
  logger->set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_default_logger(logger);
  return config;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  body(out);
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
  spdlog::info("wrote {}", path.string());
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Knowledge-graph-assisted semantic transmission: toy-world experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("-o,--out", g.out_dir, "output directory (default: $KGSC_OUT_DIR or ./kgsc_out)");
  app.add_option("-s,--set", g.overrides, "override a setting, section.key=value (repeatable)");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error");

  std::string mode_name = "MSED+KG";
  std::string ratio_text;
  std::string output;

  auto* gen = app.add_subcommand("gen-data", "write scene manifests, triples and image previews");
  std::size_t previews = 8;
  gen->add_option("--previews", previews, "number of training scenes rendered to PPM");

  app.add_subcommand("embed-kg", "train knowledge-graph embeddings");

  auto* tr = app.add_subcommand("train", "train one model (resumes from its checkpoint)");
  bool fresh = false;
  tr->add_option("--mode", mode_name, "MSED or MSED+KG");
  tr->add_option("--ratio", ratio_text, "bandwidth compression ratio, e.g. 1/6");
  tr->add_flag("--fresh", fresh, "ignore an existing checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate one model at one channel point");
  std::string channel_name = "awgn";
  double snr_db = 10.0;
  std::uint64_t seed = 0;
  ev->add_option("--mode", mode_name, "MSED or MSED+KG");
  ev->add_option("--ratio", ratio_text, "bandwidth compression ratio");
  ev->add_option("--channel", channel_name, "awgn or rayleigh");
  ev->add_option("--snr", snr_db, "SNR in dB");
  ev->add_option("--seed", seed, "evaluation seed index");
  ev->add_option("--detections", output, "write detections CSV here");

  auto* ss = app.add_subcommand("sweep-snr", "mAP versus SNR for every configured mode and channel");
  ss->add_option("--output", output, "CSV path (default <out>/sweep_snr.csv)");
  auto* sr = app.add_subcommand("sweep-rate", "mAP versus compression ratio at eval.rate_snr_db");
  sr->add_option("--output", output, "CSV path (default <out>/sweep_rate.csv)");
  auto* co = app.add_subcommand("count-ops", "parameter and operation counts per mode");
  co->add_option("--output", output, "CSV path (default <out>/complexity.csv)");

  auto* pl = app.add_subcommand("plot", "render a sweep CSV as SVG");
  std::string input, x_column = "snr_db";
  pl->add_option("--input", input, "sweep CSV")->required()->check(CLI::ExistingFile);
  pl->add_option("--output", output, "SVG path")->required();
  pl->add_option("--x", x_column, "x axis column (snr_db or requested_R)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pl->parsed()) {
      std::ifstream in(input);
      if (!in) fail(ErrorKind::kIo, "cannot open " + input);
      const auto series = tools::series_from_csv(in, x_column);
      const bool snr = x_column == "snr_db";
      write_file(output, [&](std::ostream& out) {
        tools::write_svg(out, series, snr ? "mAP versus SNR (toy world)" : "mAP versus R (toy world)",
                         snr ? "SNR (dB)" : "bandwidth compression ratio R", "mAP");
      });
      return 0;
    }

    RunConfig config = resolve(g);
    const Mode mode = parse_mode(mode_name);
    const Ratio ratio = ratio_text.empty() ? config.ratio : parse_ratio(ratio_text);
    const auto names = config.world.spec().category_names();

    if (gen->parsed()) {
      const WorldSpec spec = config.world.spec();
      const Dataset train = generate_dataset(spec, config.world.train_scenes, 0);
      const Dataset eval = generate_dataset(spec, config.world.eval_scenes, config.world.eval_first_id);
      const auto dir = config.out_dir / "data";
      write_file(dir / "train_manifest.csv",
                 [&](std::ostream& out) { write_manifest(out, spec, train.scenes); });
      write_file(dir / "eval_manifest.csv",
                 [&](std::ostream& out) { write_manifest(out, spec, eval.scenes); });
      kg::save_triples(config.triples_path(), train.kg);
      for (std::size_t i = 0; i < std::min(previews, train.scenes.size()); ++i) {
        write_ppm(dir / ("scene_" + std::to_string(train.scenes[i].id) + ".ppm"), spec, train.scenes[i]);
      }
      std::size_t regenerated = 0;
      for (const auto& s : train.scenes) regenerated += s.regenerations > 0;
      spdlog::info("{} train / {} eval scenes, {} triples, {} layouts regenerated",
                   train.scenes.size(), eval.scenes.size(), train.kg.triple_count(), regenerated);
    } else if (app.got_subcommand("embed-kg")) {
      embed_kg(config);
    } else if (tr->parsed()) {
      const TrainResult r = train(config, mode, ratio, !fresh);
      spdlog::info("checkpoint {} after {} steps", r.checkpoint.string(), r.steps);
    } else if (ev->parsed()) {
      const auto model = load_model(config, mode, ratio);
      const Evaluator evaluator(config, *model);
      const auto kind = channel::parse_channel_kind(channel_name);
      const auto dets = evaluator.detections(kind, snr_db, seed);
      const auto ap = detect::mean_average_precision(dets, evaluator.truths(), names.size(), config.eval.iou);
      std::cout << to_string(mode) << " R=" << ratio.label << " (C=" << model->rate().channels
                << ", achieved " << model->rate().achieved << ") " << channel::to_string(kind)
                << " " << snr_db << " dB seed " << seed << ": mAP " << ap.map << '\n';
      for (std::size_t c = 0; c < names.size(); ++c) {
        std::cout << "  AP " << names[c] << " = " << ap.ap[c] << " (" << ap.gt_count[c] << " objects)\n";
      }
      if (!output.empty()) {
        write_file(output, [&](std::ostream& out) { detect::write_detections_csv(out, dets); });
      }
    } else if (ss->parsed()) {
      const auto rows = sweep_snr(config);
      write_file(output.empty() ? config.out_dir / "sweep_snr.csv" : std::filesystem::path(output),
                 [&](std::ostream& out) { write_rows_csv(out, rows, names); });
    } else if (sr->parsed()) {
      const auto rows = sweep_rate(config);
      write_file(output.empty() ? config.out_dir / "sweep_rate.csv" : std::filesystem::path(output),
                 [&](std::ostream& out) { write_rows_csv(out, rows, names); });
    } else if (co->parsed()) {
      const auto rows = report_complexity(config);
      write_file(output.empty() ? config.out_dir / "complexity.csv" : std::filesystem::path(output),
                 [&](std::ostream& out) { write_complexity_csv(out, rows); });
      for (const auto& r : rows) {
        std::cout << to_string(r.mode) << ": " << r.counts.parameters << " parameters, "
                  << r.counts.additions << " additions, " << r.counts.multiplications
                  << " multiplications\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "kgsc: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "kgsc: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
