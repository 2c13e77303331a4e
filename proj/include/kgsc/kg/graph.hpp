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

// Typed triple store, metapath-constrained random walks, skip-gram
// embeddings with negative sampling, and cosine similarity.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace kgsc::kg {

enum class EntityType { kCategory, kContext };

std::string to_string(EntityType type);
EntityType parse_entity_type(const std::string& name);

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;

  auto operator<=>(const Triple&) const = default;
};

// Entities are kept in name order, so ids (and everything derived from them)
// do not depend on insertion order.
class KnowledgeGraph {
 public:
  // Re-declaring with the same type is a no-op; a different type is an error.
  void add_entity(const std::string& name, EntityType type);
  // Returns false for a duplicate. Both ends must already exist.
  bool add_triple(const std::string& head, const std::string& relation, const std::string& tail);

  std::size_t entity_count() const { return types_.size(); }
  std::size_t triple_count() const { return triples_.size(); }
  const std::set<Triple>& triples() const { return triples_; }

  bool contains(const std::string& name) const { return types_.count(name) != 0; }
  EntityType type_of(const std::string& name) const;
  std::vector<std::string> entities() const;  // sorted; index = id
  std::vector<std::string> entities_of(EntityType type) const;
  std::size_t id_of(const std::string& name) const;
  EntityType type_of(std::size_t id) const;

  // Distinct neighbours over every relation, both directions, sorted by id.
  const std::vector<std::size_t>& neighbors(std::size_t id) const;
  // Neighbours through one relation, both directions.
  std::vector<std::size_t> neighbors(std::size_t id, const std::string& relation) const;

  bool operator==(const KnowledgeGraph& other) const {
    return types_ == other.types_ && triples_ == other.triples_;
  }

 private:
  void index() const;

  std::map<std::string, EntityType> types_;
  std::set<Triple> triples_;
  mutable bool indexed_ = false;
  mutable std::vector<std::string> names_;
  mutable std::vector<EntityType> id_types_;
  mutable std::vector<std::vector<std::size_t>> adjacency_;
};

// Text form: "@type\t<entity>\t{category|context}" declarations and
// "<head>\t<relation>\t<tail>" triples; blank lines and '#' comments skipped.
KnowledgeGraph parse_triples(std::istream& in, const std::string& source = "<stream>");
KnowledgeGraph load_triples(const std::filesystem::path& path);
void write_triples(std::ostream& out, const KnowledgeGraph& kg);
void save_triples(const std::filesystem::path& path, const KnowledgeGraph& kg);

using Walk = std::vector<std::size_t>;

// One or more walks from every entity of metapath.front()'s type. Step t
// moves to a uniformly chosen neighbour of type metapath[(t + 1) mod (L-1)],
// L = metapath length; walks stop early at a dead end. Walks from entity
// `id`, repetition `r` use the seed stream (seed, id, r).
std::vector<Walk> metapath_walks(const KnowledgeGraph& kg, std::span<const EntityType> metapath,
                                 std::size_t walk_length, std::size_t walks_per_node,
                                 std::uint64_t seed);

struct EmbeddingOptions {
  std::size_t dim = 32;
  std::size_t window = 3;
  std::size_t negatives = 5;
  std::size_t epochs = 50;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> vectors;

  bool contains(const std::string& name) const;
  std::span<const double> at(const std::string& name) const;
};

// Skip-gram with negative sampling over walk windows; negatives are drawn
// from the walk unigram distribution raised to 0.75. Linear learning-rate
// decay over all updates.
EmbeddingTable train_embeddings(const std::vector<std::string>& names,
                                const std::vector<Walk>& walks, const EmbeddingOptions& options);

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// (u . v) / (|u| |v|); kDomain for a zero vector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace kgsc::kg
