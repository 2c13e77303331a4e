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

#include "kgsc/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "kgsc/core/error.hpp"

namespace kgsc::harness {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) fail(ErrorKind::kConfig, "not a number: '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) {
    fail(ErrorKind::kConfig, "not a non-negative integer: '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  fail(ErrorKind::kConfig, "not a boolean: '" + s + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + f(items[i]);
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Field size_field(std::string sec, std::string key, std::size_t& ref) {
  return {std::move(sec), std::move(key), [&ref](const std::string& v) { ref = to_u64(v); },
          [&ref] { return std::to_string(ref); }};
}
Field u64_field(std::string sec, std::string key, std::uint64_t& ref) {
  return {std::move(sec), std::move(key), [&ref](const std::string& v) { ref = to_u64(v); },
          [&ref] { return std::to_string(ref); }};
}
Field double_field(std::string sec, std::string key, double& ref) {
  return {std::move(sec), std::move(key), [&ref](const std::string& v) { ref = to_double(v); },
          [&ref] { return fmt(ref); }};
}
Field bool_field(std::string sec, std::string key, bool& ref) {
  return {std::move(sec), std::move(key), [&ref](const std::string& v) { ref = to_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& m = c.model;
  auto& ex = m.extractor;
  std::vector<Field> f = {
      u64_field("world", "seed", c.world.seed),
      size_field("world", "scene_size", c.world.scene_size),
      size_field("world", "glyph_min", c.world.glyph_min),
      size_field("world", "glyph_max", c.world.glyph_max),
      double_field("world", "color_jitter", c.world.color_jitter),
      double_field("world", "background_noise", c.world.background_noise),
      size_field("world", "train_scenes", c.world.train_scenes),
      size_field("world", "eval_scenes", c.world.eval_scenes),
      u64_field("world", "eval_first_id", c.world.eval_first_id),

      {"model", "mode", [&m](const std::string& v) { m.mode = parse_mode(trim(v)); },
       [&m] { return to_string(m.mode); }},
      {"model", "ratio", [&c](const std::string& v) { c.ratio = parse_ratio(v); },
       [&c] { return c.ratio.label; }},
      size_field("model", "pyramid_channels", ex.pyramid_channels),
      size_field("model", "stem_channels", ex.stem_channels),
      {"model", "stage_channels",
       [&ex](const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != ex.stage_channels.size()) {
           fail(ErrorKind::kConfig, "stage_channels needs " +
                                        std::to_string(ex.stage_channels.size()) + " entries");
         }
         for (std::size_t i = 0; i < items.size(); ++i) ex.stage_channels[i] = to_u64(items[i]);
       },
       [&ex] {
         std::vector<std::size_t> v(ex.stage_channels.begin(), ex.stage_channels.end());
         return join(v, [](std::size_t x) { return std::to_string(x); });
       }},
      double_field("model", "leaky_slope", ex.slope),
      size_field("model", "encoder_blocks", m.encoder_blocks),
      size_field("model", "decoder_blocks", m.decoder_blocks),
      size_field("model", "roi_size", m.roi_size),
      size_field("model", "head_hidden", m.head_hidden),
      size_field("model", "node_dim", m.node_dim),
      size_field("model", "rgat_layers", m.rgat_layers),
      size_field("model", "top_m", m.graph.top_m),
      bool_field("model", "full_pk", m.graph.full_pk),
      bool_field("model", "per_scale", m.per_scale),
      size_field("model", "rpn_batch", m.rpn_batch),
      double_field("model", "rpn_positive_fraction", m.rpn_positive_fraction),
      double_field("model", "rpn_lambda", m.rpn_lambda),
      size_field("model", "roi_batch", m.roi_batch),
      double_field("model", "roi_positive_iou", m.roi_positive_iou),
      size_field("model", "pre_nms", m.eval_proposals.pre_nms),
      double_field("model", "proposal_nms_iou", m.eval_proposals.nms_iou),
      size_field("model", "train_post_nms", m.train_proposals.post_nms),
      size_field("model", "eval_post_nms", m.eval_proposals.post_nms),
      double_field("model", "min_box_size", m.eval_proposals.min_size),
      double_field("model", "class_nms_iou", m.class_nms_iou),
      double_field("model", "score_threshold", m.score_threshold),
      size_field("model", "max_detections", m.max_detections),

      {"channel", "kind",
       [&c](const std::string& v) { c.channel.kind = channel::parse_channel_kind(trim(v)); },
       [&c] { return channel::to_string(c.channel.kind); }},
      double_field("channel", "power", c.channel.power),
      bool_field("channel", "equalize", c.channel.equalize),

      size_field("train", "epochs", c.train.epochs),
      size_field("train", "batch_size", c.train.batch_size),
      double_field("train", "learning_rate", c.train.learning_rate),
      double_field("train", "snr_min_db", c.train.snr_min_db),
      double_field("train", "snr_max_db", c.train.snr_max_db),
      u64_field("train", "seed", c.train.seed),
      u64_field("train", "init_seed", c.train.init_seed),
      size_field("train", "max_steps", c.train.max_steps),
      size_field("train", "log_every", c.train.log_every),

      size_field("embedding", "dim", c.embed.options.dim),
      size_field("embedding", "window", c.embed.options.window),
      size_field("embedding", "negatives", c.embed.options.negatives),
      size_field("embedding", "epochs", c.embed.options.epochs),
      double_field("embedding", "learning_rate", c.embed.options.learning_rate),
      u64_field("embedding", "seed", c.embed.options.seed),
      size_field("embedding", "walk_length", c.embed.walk_length),
      size_field("embedding", "walks_per_node", c.embed.walks_per_node),

      {"eval", "modes",
       [&c](const std::string& v) {
         c.eval.modes.clear();
         for (const auto& s : split_list(v)) c.eval.modes.push_back(parse_mode(s));
       },
       [&c] { return join(c.eval.modes, [](Mode x) { return to_string(x); }); }},
      {"eval", "channels",
       [&c](const std::string& v) {
         c.eval.channels.clear();
         for (const auto& s : split_list(v)) c.eval.channels.push_back(channel::parse_channel_kind(s));
       },
       [&c] { return join(c.eval.channels, [](channel::ChannelKind k) { return channel::to_string(k); }); }},
      {"eval", "snr_db",
       [&c](const std::string& v) {
         c.eval.snr_db.clear();
         for (const auto& s : split_list(v)) c.eval.snr_db.push_back(to_double(s));
       },
       [&c] { return join(c.eval.snr_db, fmt); }},
      {"eval", "ratios",
       [&c](const std::string& v) {
         c.eval.ratios.clear();
         for (const auto& s : split_list(v)) c.eval.ratios.push_back(parse_ratio(s));
       },
       [&c] { return join(c.eval.ratios, [](const Ratio& r) { return r.label; }); }},
      size_field("eval", "seeds", c.eval.seeds),
      u64_field("eval", "seed", c.eval.seed),
      double_field("eval", "rate_snr_db", c.eval.rate_snr_db),
      double_field("eval", "iou", c.eval.iou),
      size_field("eval", "batch_size", c.eval.batch_size),
      size_field("eval", "workers", c.eval.workers),

      {"output", "dir", [&c](const std::string& v) { c.out_dir = trim(v); },
       [&c] { return c.out_dir.string(); }},
  };
  return f;
}

}  // namespace

Ratio parse_ratio(const std::string& text) {
  const std::string t = trim(text);
  Ratio r;
  r.label = t;
  if (const auto slash = t.find('/'); slash != std::string::npos) {
    const double num = to_double(t.substr(0, slash));
    const double den = to_double(t.substr(slash + 1));
    if (den == 0.0) fail(ErrorKind::kConfig, "ratio '" + text + "' has a zero denominator");
    r.value = num / den;
  } else {
    r.value = to_double(t);
  }
  if (!(r.value > 0.0 && r.value <= 1.0)) fail(ErrorKind::kConfig, "ratio '" + text + "' outside (0, 1]");
  return r;
}

WorldSpec WorldConfig::spec() const {
  WorldSpec w = WorldSpec::toy(seed);
  w.scene_size = scene_size;
  w.glyph_min = glyph_min;
  w.glyph_max = glyph_max;
  w.color_jitter = color_jitter;
  w.background_noise = background_noise;
  return w;
}

std::filesystem::path RunConfig::triples_path() const { return out_dir / "kg" / "triples.txt"; }

std::filesystem::path RunConfig::embeddings_path() const { return out_dir / "kg" / "embeddings.ckpt"; }

namespace {
std::string ratio_tag(const Ratio& r) {
  std::string s = r.label;
  for (char& ch : s) {
    if (ch == '/') ch = '-';
  }
  return "R" + s;
}
}  // namespace

std::filesystem::path RunConfig::checkpoint_path(Mode mode, const Ratio& r) const {
  return out_dir / "models" / (file_tag(mode) + "_" + ratio_tag(r) + ".ckpt");
}

std::filesystem::path RunConfig::train_log_path(Mode mode, const Ratio& r) const {
  return out_dir / "models" / (file_tag(mode) + "_" + ratio_tag(r) + ".log.csv");
}

ModelConfig RunConfig::model_for(Mode mode, const Ratio& r) const {
  ModelConfig m = model;
  m.mode = mode;
  m.ratio = r.value;
  m.image_side = world.scene_size;
  m.classes = world.spec().category_count();
  m.train_proposals.pre_nms = m.eval_proposals.pre_nms;
  m.train_proposals.nms_iou = m.eval_proposals.nms_iou;
  m.train_proposals.min_size = m.eval_proposals.min_size;
  return m;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  world.spec().validate();
  if (world.train_scenes == 0 || world.eval_scenes == 0) bad("world: scene counts must be positive");
  model_for(model.mode, ratio).validate();
  if (train.batch_size == 0) bad("train: batch_size must be positive");
  if (!(train.learning_rate > 0.0)) bad("train: learning_rate must be positive");
  if (!(train.snr_min_db <= train.snr_max_db)) bad("train: snr_min_db exceeds snr_max_db");
  if (!(channel.power > 0.0)) bad("channel: power must be positive");
  if (embed.walk_length < 2 || embed.walks_per_node == 0) bad("embedding: walks too short");
  if (embed.options.dim != model.node_dim) bad("embedding.dim must equal model.node_dim");
  if (eval.seeds == 0 || eval.batch_size == 0) bad("eval: seeds and batch_size must be positive");
  if (eval.modes.empty() || eval.channels.empty() || eval.snr_db.empty() || eval.ratios.empty()) {
    bad("eval: modes, channels, snr_db and ratios must be non-empty");
  }
  if (out_dir.empty()) bad("output: dir must be set");
}

void RunConfig::ensure_output_dir() const {
  std::error_code ec;
  for (const auto& d : {out_dir, out_dir / "kg", out_dir / "models"}) {
    std::filesystem::create_directories(d, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create " + d.string() + ": " + ec.message());
  }
  const auto probe = out_dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) fail(ErrorKind::kIo, "output directory " + out_dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

RunConfig parse_config(std::istream& in, const std::string& source,
                       const std::filesystem::path& default_out_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kParse, source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  config.out_dir = default_out_dir;
  auto table = fields(config);
  std::map<std::string, Field*> by_name;
  for (auto& f : table) by_name[f.section + "." + f.key] = &f;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      fail(ErrorKind::kConfig, source + ": key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      auto it = by_name.find(name);
      if (it == by_name.end()) fail(ErrorKind::kConfig, source + ": unknown setting " + name);
      try {
        it->second->set(value.data());
      } catch (const Error& e) {
        fail(e.kind(), source + ": " + name + ": " + e.what());
      }
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::filesystem::path& default_out_dir) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path.string());
  return parse_config(in, path.string(), default_out_dir);
}

void write_config(std::ostream& out, const RunConfig& config) {
  RunConfig copy = config;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.get() << '\n';
  }
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    fail(ErrorKind::kConfig, "override '" + assignment + "' is not section.key=value");
  }
  const std::string name = trim(assignment.substr(0, eq));
  for (auto& f : fields(config)) {
    if (f.section + "." + f.key == name) {
      f.set(assignment.substr(eq + 1));
      return;
    }
  }
  fail(ErrorKind::kConfig, "unknown setting " + name);
}

}  // namespace kgsc::harness
