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

// Knowledge-graph fusion: the weighted proposal/category graph, a
// relational graph attention network over it, and the classification heads
// before and after refinement.

#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kgsc/core/layers.hpp"
#include "kgsc/kg/graph.hpp"

namespace kgsc::fusion {

// Edge families: proposal-proposal, proposal-category, category-category.
enum class EdgeType : std::size_t { kPP = 0, kPK = 1, kKK = 2 };
inline constexpr std::size_t kEdgeTypes = 3;

std::string to_string(EdgeType type);

// Undirected; endpoints are node indices (proposals first, then categories).
struct Edge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

struct WeightedGraph {
  std::size_t proposals = 0;
  std::size_t categories = 0;
  std::array<std::vector<Edge>, kEdgeTypes> edges;
  Tensor original;     // pooled proposal features [proposals, D_p], unmodified
  Tensor kg_features;  // [categories, d]

  std::size_t node_count() const { return proposals + categories; }
  std::size_t category_node(std::size_t category) const { return proposals + category; }
  const std::vector<Edge>& of(EdgeType t) const { return edges[static_cast<std::size_t>(t)]; }
  // Node partition, endpoint types, and per-type weight ranges.
  void validate() const;
};

struct GraphOptions {
  std::size_t top_m = 3;
  bool full_pk = false;  // connect every proposal to every category
};

// confidences: [P, K + 1] rows on the simplex, background last. Category k
// takes its embedding from `embeddings.at(category_names[k])`.
WeightedGraph build_weighted_graph(const Tensor& pooled, const Tensor& confidences,
                                   const kg::EmbeddingTable& embeddings,
                                   std::span<const std::string> category_names,
                                   const GraphOptions& options = {});

void dump_graph(std::ostream& out, const WeightedGraph& graph);

// Additive attention-logit bias for an edge weight. PK weights are
// confidences in [0, 1] and enter as log w; similarity weights in [-1, 1]
// are first mapped to (1 + w) / 2. Returns -inf for a zero mapped weight,
// which removes the edge.
double edge_bias(EdgeType type, double weight);

struct RgatConfig {
  std::size_t feature_dim = 0;  // D_p
  std::size_t node_dim = 32;    // d
  std::size_t layers = 3;
  double attention_slope = 0.2;
  double slope = kDefaultLeakySlope;  // between layers
};

void init_rgat(ParameterStore& store, const RgatConfig& config, Rng& rng);

struct AttentionRecord {
  std::size_t layer = 0;
  EdgeType type = EdgeType::kPP;
  std::size_t node = 0;      // receiver i
  std::size_t neighbor = 0;  // sender j
  double alpha = 0.0;
};

// One relational attention layer as a single differentiable op:
//   out_i = W_self h_i + sum_r sum_{j in N_r(i)} alpha^r_ij W_r h_j
//   alpha^r_ij = softmax_j(leaky(a_r . [W_r h_i, W_r h_j]) + bias_ij)
// Weights w_self [din, d], w[r] [din, d], att[r] [2d].
Tensor rgat_layer(const Tensor& h, const WeightedGraph& graph, const Tensor& w_self,
                  std::span<const Tensor, kEdgeTypes> w, std::span<const Tensor, kEdgeTypes> att,
                  double attention_slope, std::vector<AttentionRecord>* trace = nullptr,
                  std::size_t layer_index = 0);

// Projects proposal features to d, stacks the category embeddings under
// them, and runs `layers` attention layers with leaky activations between
// them. Returns [node_count, d].
Tensor rgat_forward(const WeightedGraph& graph, const ParameterStore& store,
                    const RgatConfig& config, std::vector<AttentionRecord>* trace = nullptr);

// Single FC + softmax: [N, D_p] -> [N, classes].
void init_initial_head(ParameterStore& store, std::size_t feature_dim, std::size_t classes,
                       Rng& rng);
Tensor initial_logits(const Tensor& features, const ParameterStore& store);
Tensor initial_classify(const Tensor& features, const ParameterStore& store);

// Two shared FC layers. in_dim is D_p alone, or d + D_p when fed refined
// features.
struct FinalHeadConfig {
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  std::size_t classes = 0;
  double slope = kDefaultLeakySlope;
};

void init_final_head(ParameterStore& store, const FinalHeadConfig& config, Rng& rng);

// [enhanced proposal rows, original]; an undefined `enhanced` yields the
// original features alone.
Tensor final_head_input(const Tensor& enhanced, std::size_t proposals, const Tensor& original);
Tensor final_logits(const Tensor& enhanced, const Tensor& original, const ParameterStore& store,
                    const FinalHeadConfig& config);
Tensor final_classify(const Tensor& enhanced, const Tensor& original, const ParameterStore& store,
                      const FinalHeadConfig& config);

}  // namespace kgsc::fusion
