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

#include "kgsc/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "kgsc/core/error.hpp"

namespace kgsc::fusion {

std::string to_string(EdgeType type) {
  switch (type) {
    case EdgeType::kPP: return "PP";
    case EdgeType::kPK: return "PK";
    case EdgeType::kKK: return "KK";
  }
  return "?";
}

void WeightedGraph::validate() const {
  const std::size_t n = node_count();
  for (std::size_t t = 0; t < kEdgeTypes; ++t) {
    const EdgeType type = static_cast<EdgeType>(t);
    const double lo = type == EdgeType::kPK ? 0.0 : -1.0;
    for (const Edge& e : edges[t]) {
      if (e.a >= n || e.b >= n) fail(ErrorKind::kShape, to_string(type) + " edge outside graph");
      const bool pa = e.a < proposals, pb = e.b < proposals;
      const bool ok = (type == EdgeType::kPP && pa && pb) || (type == EdgeType::kKK && !pa && !pb) ||
                      (type == EdgeType::kPK && pa != pb);
      if (!ok) fail(ErrorKind::kShape, to_string(type) + " edge joins the wrong node kinds");
      if (!(e.weight >= lo && e.weight <= 1.0)) {
        fail(ErrorKind::kDomain, to_string(type) + " edge weight " + std::to_string(e.weight) +
                                     " out of range");
      }
    }
  }
  if (original.defined() && (original.rank() != 2 || original.dim(0) != proposals)) {
    fail(ErrorKind::kShape, "original features " + shape_str(original.shape()) + " for " +
                                std::to_string(proposals) + " proposals");
  }
  if (kg_features.defined() && (kg_features.rank() != 2 || kg_features.dim(0) != categories)) {
    fail(ErrorKind::kShape, "category features " + shape_str(kg_features.shape()) + " for " +
                                std::to_string(categories) + " categories");
  }
}

WeightedGraph build_weighted_graph(const Tensor& pooled, const Tensor& confidences,
                                   const kg::EmbeddingTable& embeddings,
                                   std::span<const std::string> category_names,
                                   const GraphOptions& options) {
  const std::size_t P = pooled.rank() == 2 ? pooled.dim(0) : 0;
  const std::size_t K = category_names.size();
  if (P == 0) fail(ErrorKind::kDomain, "weighted graph needs at least one proposal");
  if (confidences.shape() != Shape{P, K + 1}) {
    fail(ErrorKind::kShape, "confidences " + shape_str(confidences.shape()) + " for " +
                                std::to_string(P) + " proposals and " + std::to_string(K) +
                                " categories plus background");
  }
  WeightedGraph g;
  g.proposals = P;
  g.categories = K;
  g.original = pooled;

  std::vector<double> kg_values;
  for (const std::string& name : category_names) {
    if (!embeddings.contains(name)) {
      fail(ErrorKind::kMissing, "category '" + name + "' has no knowledge-graph embedding");
    }
    auto v = embeddings.at(name);
    kg_values.insert(kg_values.end(), v.begin(), v.end());
  }
  g.kg_features = Tensor({K, embeddings.dim}, std::move(kg_values));

  const std::size_t D = pooled.dim(1);
  const auto pv = pooled.values();
  auto row = [&](std::size_t i) { return pv.subspan(i * D, D); };
  auto safe_cos = [](std::span<const double> a, std::span<const double> b) {
    double na = 0, nb = 0;
    for (double x : a) na += x * x;
    for (double x : b) nb += x * x;
    // A zero feature has no direction; treat it as orthogonal.
    return na > 0 && nb > 0 ? kg::cosine_similarity(a, b) : 0.0;
  };
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = i + 1; j < P; ++j)
      g.edges[0].push_back({i, j, safe_cos(row(i), row(j))});

  const auto cv = confidences.values();
  for (std::size_t i = 0; i < P; ++i) {
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cv[i * (K + 1) + a] > cv[i * (K + 1) + b];
    });
    const std::size_t m = options.full_pk ? K : std::min(options.top_m, K);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t k = order[r];
      g.edges[1].push_back({i, g.category_node(k), std::clamp(cv[i * (K + 1) + k], 0.0, 1.0)});
    }
  }

  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b)
      g.edges[2].push_back({g.category_node(a), g.category_node(b),
                            kg::cosine_similarity(embeddings.at(category_names[a]),
                                                  embeddings.at(category_names[b]))});
  g.validate();
  return g;
}

void dump_graph(std::ostream& out, const WeightedGraph& g) {
  out << "nodes " << g.node_count() << " proposals " << g.proposals << " categories "
      << g.categories << '\n';
  const auto old = out.precision(6);
  for (std::size_t t = 0; t < kEdgeTypes; ++t) {
    out << to_string(static_cast<EdgeType>(t)) << " edges " << g.edges[t].size() << '\n';
    for (const Edge& e : g.edges[t]) out << "  " << e.a << " -- " << e.b << "  " << e.weight << '\n';
  }
  out.precision(old);
}

double edge_bias(EdgeType type, double weight) {
  const double mapped = type == EdgeType::kPK ? weight : 0.5 * (1.0 + weight);
  if (mapped <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(mapped);
}

namespace {

struct Neighbor {
  std::size_t j;
  double bias;
};

using Neighborhoods = std::array<std::vector<std::vector<Neighbor>>, kEdgeTypes>;

Neighborhoods neighborhoods(const WeightedGraph& g) {
  Neighborhoods nb;
  for (std::size_t t = 0; t < kEdgeTypes; ++t) {
    nb[t].assign(g.node_count(), {});
    for (const Edge& e : g.edges[t]) {
      const double bias = edge_bias(static_cast<EdgeType>(t), e.weight);
      if (std::isinf(bias)) continue;
      nb[t][e.a].push_back({e.b, bias});
      if (e.b != e.a) nb[t][e.b].push_back({e.a, bias});
    }
  }
  return nb;
}

// out[n, d] += x[n, k] * w[k, d]
void matmul_acc(std::span<const double> x, std::span<const double> w, std::size_t n,
                std::size_t k, std::size_t d, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      for (std::size_t q = 0; q < d; ++q) out[i * d + q] += xv * w[p * d + q];
    }
}

}  // namespace

Tensor rgat_layer(const Tensor& h, const WeightedGraph& graph, const Tensor& w_self,
                  std::span<const Tensor, kEdgeTypes> w, std::span<const Tensor, kEdgeTypes> att,
                  double slope, std::vector<AttentionRecord>* trace, std::size_t layer_index) {
  const std::size_t N = graph.node_count();
  if (h.rank() != 2 || h.dim(0) != N) {
    fail(ErrorKind::kShape, "rgat_layer: features " + shape_str(h.shape()) + " for " +
                                std::to_string(N) + " nodes");
  }
  const std::size_t din = h.dim(1);
  const std::size_t d = w_self.rank() == 2 ? w_self.dim(1) : 0;
  if (w_self.shape() != Shape{din, d}) {
    fail(ErrorKind::kShape, "rgat_layer: self weight " + shape_str(w_self.shape()) +
                                " does not take " + std::to_string(din) + " inputs");
  }
  for (std::size_t r = 0; r < kEdgeTypes; ++r) {
    if (w[r].shape() != Shape{din, d} || att[r].shape() != Shape{2 * d}) {
      fail(ErrorKind::kShape, "rgat_layer: relation weights " + shape_str(w[r].shape()) + " / " +
                                  shape_str(att[r].shape()) + " inconsistent with " +
                                  shape_str(w_self.shape()));
    }
  }

  struct State {
    Neighborhoods nb;
    std::array<std::vector<double>, kEdgeTypes> z;      // W_r h, [N, d]
    std::array<std::vector<double>, kEdgeTypes> u, v;   // a_src . z_i, a_dst . z_j
    // Per relation, per receiver: alpha and pre-activation per neighbour.
    std::array<std::vector<std::vector<double>>, kEdgeTypes> alpha, pre;
  };
  auto st = std::make_shared<State>();
  st->nb = neighborhoods(graph);
  const auto hv = h.values();
  std::vector<double> out(N * d, 0.0);
  matmul_acc(hv, w_self.values(), N, din, d, out.data());
  for (std::size_t r = 0; r < kEdgeTypes; ++r) {
    auto& z = st->z[r];
    z.assign(N * d, 0.0);
    matmul_acc(hv, w[r].values(), N, din, d, z.data());
    const auto a = att[r].values();
    st->u[r].assign(N, 0.0);
    st->v[r].assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t q = 0; q < d; ++q) {
        st->u[r][i] += a[q] * z[i * d + q];
        st->v[r][i] += a[d + q] * z[i * d + q];
      }
    st->alpha[r].assign(N, {});
    st->pre[r].assign(N, {});
    for (std::size_t i = 0; i < N; ++i) {
      const auto& nbrs = st->nb[r][i];
      if (nbrs.empty()) continue;
      std::vector<double> logits(nbrs.size()), pre(nbrs.size());
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        pre[k] = st->u[r][i] + st->v[r][nbrs[k].j];
        logits[k] = (pre[k] > 0 ? pre[k] : slope * pre[k]) + nbrs[k].bias;
        peak = std::max(peak, logits[k]);
      }
      double total = 0.0;
      for (double& l : logits) total += (l = std::exp(l - peak));
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        const double alpha = logits[k] / total;
        logits[k] = alpha;
        const double* zj = &z[nbrs[k].j * d];
        for (std::size_t q = 0; q < d; ++q) out[i * d + q] += alpha * zj[q];
        if (trace) trace->push_back({layer_index, static_cast<EdgeType>(r), i, nbrs[k].j, alpha});
      }
      st->alpha[r][i] = std::move(logits);
      st->pre[r][i] = std::move(pre);
    }
  }

  const std::vector<Tensor> inputs{h, w_self, w[0], w[1], w[2], att[0], att[1], att[2]};
  return make_op(
      {N, d}, std::move(out), inputs,
      [st, h, w_self, w0 = w[0], w1 = w[1], w2 = w[2], a0 = att[0], a1 = att[1], a2 = att[2], N,
       din, d, slope](std::span<const double> gy, std::span<std::vector<double>*> gin) {
        const std::array<const Tensor*, kEdgeTypes> ws{&w0, &w1, &w2};
        const std::array<const Tensor*, kEdgeTypes> as{&a0, &a1, &a2};
        const auto hv = h.values();
        std::vector<double> dh(N * din, 0.0);
        // Self path.
        if (gin[1]) {
          for (std::size_t i = 0; i < N; ++i)
            for (std::size_t p = 0; p < din; ++p)
              for (std::size_t q = 0; q < d; ++q) (*gin[1])[p * d + q] += hv[i * din + p] * gy[i * d + q];
        }
        {
          const auto wv = w_self.values();
          for (std::size_t i = 0; i < N; ++i)
            for (std::size_t p = 0; p < din; ++p) {
              double acc = 0.0;
              for (std::size_t q = 0; q < d; ++q) acc += gy[i * d + q] * wv[p * d + q];
              dh[i * din + p] += acc;
            }
        }
        for (std::size_t r = 0; r < kEdgeTypes; ++r) {
          const auto& z = st->z[r];
          const auto a = as[r]->values();
          std::vector<double> dz(N * d, 0.0), du(N, 0.0), dv(N, 0.0);
          for (std::size_t i = 0; i < N; ++i) {
            const auto& nbrs = st->nb[r][i];
            if (nbrs.empty()) continue;
            const auto& alpha = st->alpha[r][i];
            const auto& pre = st->pre[r][i];
            std::vector<double> dalpha(nbrs.size());
            double mix = 0.0;
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
              const std::size_t j = nbrs[k].j;
              double g = 0.0;
              for (std::size_t q = 0; q < d; ++q) {
                g += gy[i * d + q] * z[j * d + q];
                dz[j * d + q] += alpha[k] * gy[i * d + q];
              }
              dalpha[k] = g;
              mix += alpha[k] * g;
            }
            for (std::size_t k = 0; k < nbrs.size(); ++k) {
              const double de = alpha[k] * (dalpha[k] - mix);
              const double dp = de * (pre[k] > 0 ? 1.0 : slope);
              du[i] += dp;
              dv[nbrs[k].j] += dp;
            }
          }
          std::vector<double>* ga = gin[5 + r];
          for (std::size_t i = 0; i < N; ++i)
            for (std::size_t q = 0; q < d; ++q) {
              dz[i * d + q] += du[i] * a[q] + dv[i] * a[d + q];
              if (ga) {
                (*ga)[q] += du[i] * z[i * d + q];
                (*ga)[d + q] += dv[i] * z[i * d + q];
              }
            }
          if (gin[2 + r]) {
            for (std::size_t i = 0; i < N; ++i)
              for (std::size_t p = 0; p < din; ++p) {
                const double x = hv[i * din + p];
                if (x == 0.0) continue;
                for (std::size_t q = 0; q < d; ++q) (*gin[2 + r])[p * d + q] += x * dz[i * d + q];
              }
          }
          const auto wv = ws[r]->values();
          for (std::size_t i = 0; i < N; ++i)
            for (std::size_t p = 0; p < din; ++p) {
              double acc = 0.0;
              for (std::size_t q = 0; q < d; ++q) acc += dz[i * d + q] * wv[p * d + q];
              dh[i * din + p] += acc;
            }
        }
        if (gin[0])
          for (std::size_t i = 0; i < dh.size(); ++i) (*gin[0])[i] += dh[i];
      });
}

namespace {

const std::array<const char*, kEdgeTypes> kRelationNames{"pp", "pk", "kk"};

std::string layer_name(std::size_t l) { return "fusion.rgat" + std::to_string(l); }

}  // namespace

void init_rgat(ParameterStore& store, const RgatConfig& config, Rng& rng) {
  if (config.layers == 0 || config.node_dim == 0 || config.feature_dim == 0) {
    fail(ErrorKind::kConfig, "R-GAT needs positive layer count and dimensions");
  }
  const std::size_t d = config.node_dim;
  init_fc(store, "fusion.proj", config.feature_dim, d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string n = layer_name(l);
    store.add(n + ".self", Tensor({d, d}, fan_in_uniform(d * d, d, rng)));
    for (const char* r : kRelationNames) {
      store.add(n + "." + r + ".w", Tensor({d, d}, fan_in_uniform(d * d, d, rng)));
      store.add(n + "." + r + ".a", Tensor({2 * d}, fan_in_uniform(2 * d, 2 * d, rng)));
    }
  }
}

Tensor rgat_forward(const WeightedGraph& graph, const ParameterStore& store,
                    const RgatConfig& config, std::vector<AttentionRecord>* trace) {
  graph.validate();
  const std::size_t d = config.node_dim;
  if (graph.kg_features.dim(1) != d) {
    fail(ErrorKind::kShape, "category embeddings have dimension " +
                                std::to_string(graph.kg_features.dim(1)) + ", R-GAT expects " +
                                std::to_string(d));
  }
  Tensor proj = apply_fc(store, "fusion.proj", graph.original);
  const std::array<Tensor, 2> parts{proj, graph.kg_features};
  Tensor h = reshape(concat_flat(parts), {graph.node_count(), d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string n = layer_name(l);
    const std::array<Tensor, kEdgeTypes> w{store.get(n + ".pp.w"), store.get(n + ".pk.w"),
                                           store.get(n + ".kk.w")};
    const std::array<Tensor, kEdgeTypes> a{store.get(n + ".pp.a"), store.get(n + ".pk.a"),
                                           store.get(n + ".kk.a")};
    h = rgat_layer(h, graph, store.get(n + ".self"), w, a, config.attention_slope, trace, l);
    if (l + 1 < config.layers) h = leaky_relu(h, config.slope);
  }
  return h;
}

void init_initial_head(ParameterStore& store, std::size_t feature_dim, std::size_t classes,
                       Rng& rng) {
  init_fc(store, "fusion.initial", feature_dim, classes, rng);
}

Tensor initial_logits(const Tensor& features, const ParameterStore& store) {
  return apply_fc(store, "fusion.initial", features);
}

Tensor initial_classify(const Tensor& features, const ParameterStore& store) {
  return softmax_rows(initial_logits(features, store));
}

void init_final_head(ParameterStore& store, const FinalHeadConfig& c, Rng& rng) {
  init_fc(store, "head.fc1", c.in_dim, c.hidden, rng);
  init_fc(store, "head.fc2", c.hidden, c.classes, rng);
}

Tensor final_head_input(const Tensor& enhanced, std::size_t proposals, const Tensor& original) {
  if (original.rank() != 2 || original.dim(0) != proposals) {
    fail(ErrorKind::kShape, "original features " + shape_str(original.shape()) + " for " +
                                std::to_string(proposals) + " proposals");
  }
  if (!enhanced.defined()) return original;
  if (enhanced.rank() != 2 || enhanced.dim(0) < proposals) {
    fail(ErrorKind::kShape, "enhanced features " + shape_str(enhanced.shape()) + " cover fewer than " +
                                std::to_string(proposals) + " proposals");
  }
  Tensor rows = enhanced.dim(0) == proposals
                    ? enhanced
                    : slice_flat(enhanced, 0, {proposals, enhanced.dim(1)});
  return concat_cols(rows, original);
}

Tensor final_logits(const Tensor& enhanced, const Tensor& original, const ParameterStore& store,
                    const FinalHeadConfig& config) {
  const std::size_t proposals = original.rank() == 2 ? original.dim(0) : 0;
  Tensor x = final_head_input(enhanced, proposals, original);
  if (x.dim(1) != config.in_dim) {
    fail(ErrorKind::kShape, "final head expects " + std::to_string(config.in_dim) +
                                " inputs, got " + shape_str(x.shape()));
  }
  Tensor hidden = leaky_relu(apply_fc(store, "head.fc1", x), config.slope);
  return apply_fc(store, "head.fc2", hidden);
}

Tensor final_classify(const Tensor& enhanced, const Tensor& original, const ParameterStore& store,
                      const FinalHeadConfig& config) {
  return softmax_rows(final_logits(enhanced, original, store, config));
}

}  // namespace kgsc::fusion
