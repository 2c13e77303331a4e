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

// Synthetic scenes: colored glyphs on a noisy gray field, with category
// presence driven by a per-scene context type.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgsc/core/tensor.hpp"
#include "kgsc/detect/detector.hpp"
#include "kgsc/kg/graph.hpp"

namespace kgsc::harness {

enum class Glyph { kSquare, kDisc, kRing, kCross, kTriangle };

using Color = std::array<double, 3>;

struct CategorySpec {
  std::string name;
  Glyph glyph = Glyph::kSquare;
  Color color{};
};

struct ContextSpec {
  std::string name;
  std::vector<double> presence;  // P(category present | context), one per category
};

// Presence probability at or above which a category counts as belonging to a
// context (KG appears_in / co_occurs_with edges, disambiguation check).
inline constexpr double kTypicalPresence = 0.3;

struct WorldSpec {
  std::vector<CategorySpec> categories;
  std::vector<std::pair<std::size_t, std::size_t>> confusable;
  std::vector<ContextSpec> contexts;
  std::size_t glyph_min = 14;
  std::size_t glyph_max = 28;
  std::size_t scene_size = 128;
  double color_jitter = 0.06;
  double background = 0.45;
  double background_noise = 0.05;
  double max_overlap_iou = 0.1;
  std::size_t placement_retries = 50;
  std::uint64_t seed = 0;

  std::size_t category_count() const { return categories.size(); }
  std::vector<std::string> category_names() const;

  // Throws kConfig; includes the requirement that each confusable pair flips
  // its majority member between two contexts that also differ in some other
  // category's presence.
  void validate() const;

  // Six categories (one confusable pair), two contexts.
  static WorldSpec toy(std::uint64_t seed = 0);
};

struct SceneObject {
  std::size_t category = 0;
  detect::Box box;
  Color color{};
};

struct Scene {
  std::uint64_t id = 0;
  std::size_t context = 0;
  std::vector<SceneObject> objects;
  std::size_t regenerations = 0;  // layouts discarded for unplaceable glyphs
};

// Deterministic in (spec.seed, id).
Scene generate_scene(const WorldSpec& spec, std::uint64_t id);

// [3, S, S] channel-major pixels in [0, 1].
std::vector<double> render(const WorldSpec& spec, const Scene& scene);
Tensor render_batch(const WorldSpec& spec, std::span<const Scene> scenes);

struct Dataset {
  std::vector<Scene> scenes;
  kg::KnowledgeGraph kg;
};

// Scenes carry ids first_id .. first_id + n - 1; images are rendered on demand.
Dataset generate_dataset(const WorldSpec& spec, std::size_t n_scenes, std::uint64_t first_id = 0);

// Relations: appears_in (category -> context), co_occurs_with (categories
// typical of a shared context), similar_appearance (confusable pairs).
kg::KnowledgeGraph build_knowledge_graph(const WorldSpec& spec);

// Image index i refers to scenes[i].
std::vector<detect::GroundTruth> ground_truths(std::span<const Scene> scenes);
std::vector<detect::Box> boxes_of(const Scene& scene);

// scene_id,context,category,x1,y1,x2,y2
void write_manifest(std::ostream& out, const WorldSpec& spec, std::span<const Scene> scenes);
void write_ppm(const std::filesystem::path& path, const WorldSpec& spec, const Scene& scene);

}  // namespace kgsc::harness
