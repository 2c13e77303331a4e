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

#include "kgsc/kg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "kgsc/core/error.hpp"
#include "kgsc/core/params.hpp"
#include "kgsc/core/rng.hpp"

namespace kgsc::kg {

std::string to_string(EntityType type) {
  return type == EntityType::kCategory ? "category" : "context";
}

EntityType parse_entity_type(const std::string& name) {
  if (name == "category") return EntityType::kCategory;
  if (name == "context") return EntityType::kContext;
  fail(ErrorKind::kParse, "unknown entity type '" + name + "' (expected category or context)");
}

void KnowledgeGraph::add_entity(const std::string& name, EntityType type) {
  if (name.empty()) fail(ErrorKind::kConfig, "entity name must not be empty");
  auto [it, inserted] = types_.emplace(name, type);
  if (!inserted && it->second != type) {
    fail(ErrorKind::kConfig, "entity '" + name + "' declared as both " + to_string(it->second) +
                                 " and " + to_string(type));
  }
  indexed_ = indexed_ && !inserted;
}

bool KnowledgeGraph::add_triple(const std::string& head, const std::string& relation,
                                const std::string& tail) {
  for (const std::string* e : {&head, &tail}) {
    if (!contains(*e)) fail(ErrorKind::kMissing, "triple references undeclared entity '" + *e + "'");
  }
  if (relation.empty()) fail(ErrorKind::kConfig, "relation name must not be empty");
  const bool inserted = triples_.insert({head, relation, tail}).second;
  if (inserted) indexed_ = false;
  return inserted;
}

EntityType KnowledgeGraph::type_of(const std::string& name) const {
  auto it = types_.find(name);
  if (it == types_.end()) fail(ErrorKind::kMissing, "unknown entity '" + name + "'");
  return it->second;
}

std::vector<std::string> KnowledgeGraph::entities() const {
  index();
  return names_;
}

std::vector<std::string> KnowledgeGraph::entities_of(EntityType type) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : types_)
    if (t == type) out.push_back(name);
  return out;
}

std::size_t KnowledgeGraph::id_of(const std::string& name) const {
  index();
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) fail(ErrorKind::kMissing, "unknown entity '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

EntityType KnowledgeGraph::type_of(std::size_t id) const {
  index();
  return id_types_.at(id);
}

const std::vector<std::size_t>& KnowledgeGraph::neighbors(std::size_t id) const {
  index();
  return adjacency_.at(id);
}

std::vector<std::size_t> KnowledgeGraph::neighbors(std::size_t id,
                                                   const std::string& relation) const {
  index();
  std::vector<std::size_t> out;
  const std::string& name = names_.at(id);
  for (const Triple& t : triples_) {
    if (t.relation != relation) continue;
    if (t.head == name) out.push_back(id_of(t.tail));
    if (t.tail == name) out.push_back(id_of(t.head));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void KnowledgeGraph::index() const {
  if (indexed_) return;
  names_.clear();
  id_types_.clear();
  for (const auto& [name, t] : types_) {
    names_.push_back(name);
    id_types_.push_back(t);
  }
  adjacency_.assign(names_.size(), {});
  auto id = [&](const std::string& n) {
    return static_cast<std::size_t>(std::lower_bound(names_.begin(), names_.end(), n) -
                                    names_.begin());
  };
  for (const Triple& t : triples_) {
    const std::size_t h = id(t.head), r = id(t.tail);
    adjacency_[h].push_back(r);
    if (h != r) adjacency_[r].push_back(h);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  indexed_ = true;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

KnowledgeGraph parse_triples(std::istream& in, const std::string& source) {
  // Declarations first, so triples may precede the @type lines they use.
  std::vector<std::pair<std::size_t, std::vector<std::string>>> pending;
  KnowledgeGraph kg;
  std::string line;
  std::size_t number = 0;
  auto where = [&](std::size_t n) { return source + ":" + std::to_string(n) + ": "; };
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      fail(ErrorKind::kParse, where(number) + "expected three tab-separated fields");
    }
    if (fields[0] == "@type") {
      try {
        kg.add_entity(fields[1], parse_entity_type(fields[2]));
      } catch (const Error& e) {
        fail(e.kind(), where(number) + e.what());
      }
    } else {
      pending.emplace_back(number, std::move(fields));
    }
  }
  for (const auto& [n, f] : pending) {
    if (!kg.contains(f[0]) || !kg.contains(f[2])) {
      fail(ErrorKind::kParse, where(n) + "entity '" + (kg.contains(f[0]) ? f[2] : f[0]) +
                                  "' has no @type declaration");
    }
    kg.add_triple(f[0], f[1], f[2]);
  }
  return kg;
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kMissing, "cannot open triples file " + path.string());
  return parse_triples(in, path.string());
}

void write_triples(std::ostream& out, const KnowledgeGraph& kg) {
  for (const std::string& name : kg.entities())
    out << "@type\t" << name << '\t' << to_string(kg.type_of(name)) << '\n';
  for (const Triple& t : kg.triples()) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

void save_triples(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write triples file " + path.string());
  write_triples(out, kg);
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

std::vector<Walk> metapath_walks(const KnowledgeGraph& kg, std::span<const EntityType> metapath,
                                 std::size_t walk_length, std::size_t walks_per_node,
                                 std::uint64_t seed) {
  if (metapath.size() < 2 || metapath.front() != metapath.back()) {
    fail(ErrorKind::kConfig, "metapath must have at least two entries and start and end with the "
                             "same entity type");
  }
  std::vector<Walk> walks;
  if (kg.entity_count() == 0 || walk_length == 0) return walks;
  const std::size_t period = metapath.size() - 1;
  std::vector<std::size_t> candidates;
  for (std::size_t start = 0; start < kg.entity_count(); ++start) {
    if (kg.type_of(start) != metapath.front()) continue;
    for (std::size_t r = 0; r < walks_per_node; ++r) {
      Rng rng(derive_seed(seed, {start, r}));
      Walk walk{start};
      while (walk.size() < walk_length) {
        const EntityType want = metapath[(walk.size() - 1) % period + 1];
        candidates.clear();
        for (std::size_t nb : kg.neighbors(walk.back()))
          if (kg.type_of(nb) == want) candidates.push_back(nb);
        if (candidates.empty()) break;
        walk.push_back(candidates[rng.index(candidates.size())]);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

bool EmbeddingTable::contains(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::span<const double> EmbeddingTable::at(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail(ErrorKind::kMissing, "no embedding for entity '" + name + "'");
  return vectors[static_cast<std::size_t>(it - names.begin())];
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

EmbeddingTable train_embeddings(const std::vector<std::string>& names,
                                const std::vector<Walk>& walks, const EmbeddingOptions& opt) {
  if (opt.dim < 1) fail(ErrorKind::kConfig, "embedding dimension must be at least 1");
  const std::size_t V = names.size();
  std::vector<double> freq(V, 0.0);
  std::size_t tokens = 0;
  for (const Walk& w : walks) {
    for (std::size_t id : w) {
      if (id >= V) fail(ErrorKind::kDomain, "walk references entity id " + std::to_string(id));
      freq[id] += 1.0;
    }
    tokens += w.size();
  }
  if (tokens == 0) fail(ErrorKind::kDomain, "cannot train embeddings on an empty walk set");
  for (double& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<std::size_t> negative(freq.begin(), freq.end());

  const std::size_t d = opt.dim;
  Rng rng(opt.seed);
  std::vector<double> u(V * d), v(V * d, 0.0);
  for (double& x : u) x = rng.uniform(-0.5, 0.5) / static_cast<double>(d);

  const double total = static_cast<double>(opt.epochs * tokens);
  double processed = 0.0;
  std::vector<double> acc(d);
  auto update = [&](std::size_t center, std::size_t target, double label, double lr) {
    double* uc = &u[center * d];
    double* vt = &v[target * d];
    double dot = 0.0;
    for (std::size_t q = 0; q < d; ++q) dot += uc[q] * vt[q];
    const double g = lr * (label - sigmoid(dot));
    for (std::size_t q = 0; q < d; ++q) {
      acc[q] += g * vt[q];
      vt[q] += g * uc[q];
    }
  };
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    for (const Walk& w : walks) {
      for (std::size_t i = 0; i < w.size(); ++i, processed += 1.0) {
        const double lr = std::max(opt.learning_rate * 1e-4,
                                   opt.learning_rate * (1.0 - processed / total));
        const std::size_t lo = i >= opt.window ? i - opt.window : 0;
        const std::size_t hi = std::min(w.size() - 1, i + opt.window);
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          std::fill(acc.begin(), acc.end(), 0.0);
          update(w[i], w[j], 1.0, lr);
          for (std::size_t s = 0; s < opt.negatives; ++s) {
            const std::size_t neg = negative(rng.engine());
            if (neg == w[j]) continue;
            update(w[i], neg, 0.0, lr);
          }
          double* uc = &u[w[i] * d];
          for (std::size_t q = 0; q < d; ++q) uc[q] += acc[q];
        }
      }
    }
  }
  EmbeddingTable table;
  table.dim = d;
  table.names = names;
  for (std::size_t e = 0; e < V; ++e)
    table.vectors.emplace_back(u.begin() + static_cast<std::ptrdiff_t>(e * d),
                               u.begin() + static_cast<std::ptrdiff_t>((e + 1) * d));
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  TensorMap map;
  for (std::size_t e = 0; e < table.names.size(); ++e)
    map.emplace("embedding/" + table.names[e], Tensor({table.dim}, table.vectors[e]));
  save_checkpoint(path, map);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  const TensorMap map = load_checkpoint(path);
  EmbeddingTable table;
  const std::string prefix = "embedding/";
  for (const auto& [name, t] : map) {
    if (!name.starts_with(prefix)) continue;
    if (t.rank() != 1 || (table.dim != 0 && t.dim(0) != table.dim)) {
      fail(ErrorKind::kParse, "embedding '" + name + "' has shape " + shape_str(t.shape()));
    }
    table.dim = t.dim(0);
    table.names.push_back(name.substr(prefix.size()));
    table.vectors.emplace_back(t.values().begin(), t.values().end());
  }
  if (table.names.empty()) fail(ErrorKind::kParse, path.string() + " holds no embeddings");
  return table;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorKind::kShape, "cosine similarity of vectors with lengths " +
                                std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) fail(ErrorKind::kDomain, "cosine similarity of a zero vector");
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

}  // namespace kgsc::kg
