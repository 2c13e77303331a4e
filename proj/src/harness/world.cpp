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

#include "kgsc/harness/world.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "kgsc/core/error.hpp"
#include "kgsc/core/rng.hpp"

namespace kgsc::harness {
namespace {

constexpr std::uint64_t kLayoutStream = 0x6c61796f7574ULL;
constexpr std::uint64_t kPixelStream = 0x706978656c73ULL;
constexpr std::size_t kMaxRegenerations = 1000;

bool inside(Glyph glyph, const detect::Box& b, double px, double py) {
  if (px < b.x1 || px >= b.x2 || py < b.y1 || py >= b.y2) return false;
  const double r = 0.5 * b.width();
  const double dx = px - b.cx();
  const double dy = py - b.cy();
  switch (glyph) {
    case Glyph::kSquare:
      return true;
    case Glyph::kDisc:
      return dx * dx + dy * dy <= r * r;
    case Glyph::kRing: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case Glyph::kCross:
      return std::abs(dx) <= r / 3.0 || std::abs(dy) <= r / 3.0;
    case Glyph::kTriangle:
      return std::abs(dx) <= 0.5 * (py - b.y1);
  }
  return false;
}

// One attempt at a layout; false when some glyph could not be placed.
bool try_layout(const WorldSpec& spec, Rng& rng, Scene& scene) {
  const ContextSpec& ctx = spec.contexts[scene.context];
  std::vector<std::size_t> present;
  while (present.empty()) {
    for (std::size_t c = 0; c < spec.category_count(); ++c) {
      if (rng.bernoulli(ctx.presence[c])) present.push_back(c);
    }
  }
  scene.objects.clear();
  for (std::size_t c : present) {
    const auto side = static_cast<double>(spec.glyph_min + rng.index(spec.glyph_max - spec.glyph_min + 1));
    const std::size_t span = spec.scene_size - 2 - static_cast<std::size_t>(side);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.placement_retries && !placed; ++attempt) {
      const double x = 1.0 + static_cast<double>(rng.index(span + 1));
      const double y = 1.0 + static_cast<double>(rng.index(span + 1));
      const detect::Box box{x, y, x + side, y + side};
      placed = std::none_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
        return detect::iou(o.box, box) > spec.max_overlap_iou;
      });
      if (placed) {
        Color color = spec.categories[c].color;
        for (double& v : color) {
          v = std::clamp(v + rng.uniform(-spec.color_jitter, spec.color_jitter), 0.0, 1.0);
        }
        scene.objects.push_back({c, box, color});
      }
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> WorldSpec::category_names() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.push_back(c.name);
  return out;
}

void WorldSpec::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kConfig, "world: " + msg); };
  if (categories.empty()) bad("at least one category required");
  if (contexts.empty()) bad("at least one context required");
  if (glyph_min < 4 || glyph_min > glyph_max) bad("glyph size range must satisfy 4 <= min <= max");
  if (glyph_max + 4 > scene_size) bad("glyphs must fit inside the scene");
  if (placement_retries == 0) bad("placement_retries must be positive");
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].name.empty()) bad("category names must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (categories[i].name == categories[j].name) bad("duplicate category " + categories[i].name);
    }
  }
  for (const auto& ctx : contexts) {
    if (ctx.presence.size() != categories.size()) {
      bad("context " + ctx.name + " needs one presence probability per category");
    }
    double any = 0.0;
    for (double p : ctx.presence) {
      if (!(p >= 0.0 && p <= 1.0)) bad("presence probabilities must lie in [0, 1]");
      any = std::max(any, p);
    }
    if (any <= 0.0) bad("context " + ctx.name + " never produces an object");
  }
  for (auto [a, b] : confusable) {
    if (a >= categories.size() || b >= categories.size() || a == b) bad("bad confusable pair");
    bool resolved = false;
    for (std::size_t x = 0; x < contexts.size() && !resolved; ++x) {
      for (std::size_t y = 0; y < contexts.size() && !resolved; ++y) {
        const auto& px = contexts[x].presence;
        const auto& py = contexts[y].presence;
        if (!(px[a] >= kTypicalPresence && px[a] > px[b] && py[b] >= kTypicalPresence &&
              py[b] > py[a])) {
          continue;
        }
        for (std::size_t c = 0; c < categories.size() && !resolved; ++c) {
          if (c != a && c != b && std::abs(px[c] - py[c]) >= kTypicalPresence) resolved = true;
        }
      }
    }
    if (!resolved) {
      bad("confusable pair (" + categories[a].name + ", " + categories[b].name +
          ") is not disambiguated by any context-correlated category");
    }
  }
}

WorldSpec WorldSpec::toy(std::uint64_t seed) {
  WorldSpec w;
  w.categories = {
      {"square", Glyph::kSquare, {0.85, 0.15, 0.15}},
      {"disc", Glyph::kDisc, {0.15, 0.75, 0.2}},
      {"ring", Glyph::kRing, {0.15, 0.25, 0.85}},
      {"cross", Glyph::kCross, {0.9, 0.85, 0.15}},
      {"wedge_a", Glyph::kTriangle, {0.7, 0.3, 0.8}},
      {"wedge_b", Glyph::kTriangle, {0.74, 0.3, 0.76}},
  };
  w.confusable = {{4, 5}};
  w.contexts = {
      {"harbor", {0.95, 0.6, 0.05, 0.05, 0.7, 0.05}},
      {"airfield", {0.05, 0.05, 0.95, 0.6, 0.05, 0.7}},
  };
  w.seed = seed;
  return w;
}

Scene generate_scene(const WorldSpec& spec, std::uint64_t id) {
  Scene scene;
  scene.id = id;
  for (std::size_t attempt = 0; attempt < kMaxRegenerations; ++attempt) {
    Rng rng(derive_seed(spec.seed, {kLayoutStream, id, attempt}));
    scene.context = rng.index(spec.contexts.size());
    if (try_layout(spec, rng, scene)) {
      scene.regenerations = attempt;
      if (attempt > 0) {
        spdlog::warn("scene {}: glyph placement failed, layout regenerated {} time(s)", id, attempt);
      }
      return scene;
    }
  }
  fail(ErrorKind::kConfig, "scene " + std::to_string(id) + ": no valid layout after " +
                               std::to_string(kMaxRegenerations) + " regenerations");
}

std::vector<double> render(const WorldSpec& spec, const Scene& scene) {
  const std::size_t s = spec.scene_size;
  std::vector<double> img(3 * s * s);
  Rng rng(derive_seed(spec.seed, {kPixelStream, scene.id}));
  for (double& v : img) v = spec.background + rng.normal(0.0, spec.background_noise);
  for (const SceneObject& o : scene.objects) {
    const Glyph glyph = spec.categories[o.category].glyph;
    const auto y0 = static_cast<std::size_t>(o.box.y1);
    const auto x0 = static_cast<std::size_t>(o.box.x1);
    const auto y1 = std::min(s, static_cast<std::size_t>(std::ceil(o.box.y2)));
    const auto x1 = std::min(s, static_cast<std::size_t>(std::ceil(o.box.x2)));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        if (!inside(glyph, o.box, x + 0.5, y + 0.5)) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) img[(ch * s + y) * s + x] = o.color[ch];
      }
    }
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Tensor render_batch(const WorldSpec& spec, std::span<const Scene> scenes) {
  const std::size_t s = spec.scene_size;
  std::vector<double> values;
  values.reserve(scenes.size() * 3 * s * s);
  for (const Scene& scene : scenes) {
    const auto img = render(spec, scene);
    values.insert(values.end(), img.begin(), img.end());
  }
  return Tensor({scenes.size(), 3, s, s}, std::move(values));
}

Dataset generate_dataset(const WorldSpec& spec, std::size_t n_scenes, std::uint64_t first_id) {
  spec.validate();
  Dataset ds;
  ds.scenes.reserve(n_scenes);
  for (std::size_t i = 0; i < n_scenes; ++i) ds.scenes.push_back(generate_scene(spec, first_id + i));
  ds.kg = build_knowledge_graph(spec);
  return ds;
}

kg::KnowledgeGraph build_knowledge_graph(const WorldSpec& spec) {
  kg::KnowledgeGraph kg;
  for (const auto& c : spec.categories) kg.add_entity(c.name, kg::EntityType::kCategory);
  for (const auto& x : spec.contexts) kg.add_entity(x.name, kg::EntityType::kContext);
  const std::size_t n = spec.category_count();
  for (const auto& x : spec.contexts) {
    for (std::size_t a = 0; a < n; ++a) {
      if (x.presence[a] < kTypicalPresence) continue;
      kg.add_triple(spec.categories[a].name, "appears_in", x.name);
      for (std::size_t b = a + 1; b < n; ++b) {
        if (x.presence[b] >= kTypicalPresence) {
          kg.add_triple(spec.categories[a].name, "co_occurs_with", spec.categories[b].name);
        }
      }
    }
  }
  for (auto [a, b] : spec.confusable) {
    kg.add_triple(spec.categories[a].name, "similar_appearance", spec.categories[b].name);
  }
  return kg;
}

std::vector<detect::GroundTruth> ground_truths(std::span<const Scene> scenes) {
  std::vector<detect::GroundTruth> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& o : scenes[i].objects) out.push_back({i, o.category, o.box});
  }
  return out;
}

std::vector<detect::Box> boxes_of(const Scene& scene) {
  std::vector<detect::Box> out;
  for (const auto& o : scene.objects) out.push_back(o.box);
  return out;
}

void write_manifest(std::ostream& out, const WorldSpec& spec, std::span<const Scene> scenes) {
  out << "scene_id,context,category,x1,y1,x2,y2\n";
  for (const Scene& scene : scenes) {
    for (const auto& o : scene.objects) {
      out << scene.id << ',' << spec.contexts[scene.context].name << ','
          << spec.categories[o.category].name << ',' << o.box.x1 << ',' << o.box.y1 << ','
          << o.box.x2 << ',' << o.box.y2 << '\n';
    }
  }
}

void write_ppm(const std::filesystem::path& path, const WorldSpec& spec, const Scene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  const std::size_t s = spec.scene_size;
  const auto img = render(spec, scene);
  out << "P6\n" << s << ' ' << s << "\n255\n";
  for (std::size_t p = 0; p < s * s; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      out.put(static_cast<char>(std::lround(img[ch * s * s + p] * 255.0)));
    }
  }
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

}  // namespace kgsc::harness
