#include "gscope/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gscope {

namespace {

GraphBundle from_edges(std::uint32_t n, std::vector<std::pair<NodeId, NodeId>> edges) {
  return build_graph(n, edges);
}

}  // namespace

GraphBundle fixture_eight_node_cubic() {
  return from_edges(8, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 0},
                        {0, 4}, {1, 7}, {3, 6}, {2, 5}});
}

GraphBundle fixture_two_component_2regular() {
  return from_edges(9, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0},
                        {6, 7}, {7, 8}, {8, 6}});
}

GraphBundle fixture_triangle() { return from_edges(3, {{0, 1}, {1, 2}, {2, 0}}); }

GraphBundle fixture_path(std::uint32_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return from_edges(n, e);
}

GraphBundle fixture_star(std::uint32_t leaves) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return from_edges(leaves + 1, e);
}

GraphBundle fixture_complete(std::uint32_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return from_edges(n, e);
}

GraphBundle fixture_karate() {
  static const std::pair<NodeId, NodeId> kEdges[] = {
      {0, 1},   {0, 2},   {0, 3},   {0, 4},   {0, 5},   {0, 6},   {0, 7},   {0, 8},
      {0, 10},  {0, 11},  {0, 12},  {0, 13},  {0, 17},  {0, 19},  {0, 21},  {0, 31},
      {1, 2},   {1, 3},   {1, 7},   {1, 13},  {1, 17},  {1, 19},  {1, 21},  {1, 30},
      {2, 3},   {2, 7},   {2, 8},   {2, 9},   {2, 13},  {2, 27},  {2, 28},  {2, 32},
      {3, 7},   {3, 12},  {3, 13},  {4, 6},   {4, 10},  {5, 6},   {5, 10},  {5, 16},
      {6, 16},  {8, 30},  {8, 32},  {8, 33},  {9, 33},  {13, 33}, {14, 32}, {14, 33},
      {15, 32}, {15, 33}, {18, 32}, {18, 33}, {19, 33}, {20, 32}, {20, 33}, {22, 32},
      {22, 33}, {23, 25}, {23, 27}, {23, 29}, {23, 32}, {23, 33}, {24, 25}, {24, 27},
      {24, 31}, {25, 31}, {26, 29}, {26, 33}, {27, 33}, {28, 31}, {28, 33}, {29, 32},
      {29, 33}, {30, 32}, {30, 33}, {31, 32}, {31, 33}, {32, 33}};
  return from_edges(34, {std::begin(kEdges), std::end(kEdges)});
}

GraphBundle make_sbm(const SbmParams& p) {
  const std::uint32_t n = p.nodes_per_block * p.num_blocks;
  Rng rng = make_rng(mix64(p.seed, 0xb10c5));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u) {
    const auto bu = u / p.nodes_per_block;
    for (NodeId v = u + 1; v < n; ++v) {
      const auto bv = v / p.nodes_per_block;
      const double prob = (bu == bv) ? p.p_intra : p.p_inter;
      if (unif(rng) < prob) edges.emplace_back(u, v);
    }
  }

  std::vector<std::uint32_t> labels(n);
  for (NodeId v = 0; v < n; ++v) {
    const auto block = v / p.nodes_per_block;
    labels[v] = p.label_mod ? block % p.label_mod : block;
  }
  const std::uint32_t num_classes = p.label_mod ? p.label_mod : p.num_blocks;

  std::vector<float> feats(static_cast<std::size_t>(n) * p.feature_dim);
  Rng frng = make_rng(mix64(p.seed, 0xfea75));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (NodeId v = 0; v < n; ++v) {
    const double sign = (labels[v] % 2 == 0) ? 1.0 : -1.0;
    for (std::uint32_t j = 0; j < p.feature_dim; ++j) {
      double x = gauss(frng);
      if (j < 2) x += sign * p.mean_shift;
      feats[static_cast<std::size_t>(v) * p.feature_dim + j] = static_cast<float>(x);
    }
  }

  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  Rng srng = make_rng(mix64(p.seed, 0x5b117));
  std::shuffle(order.begin(), order.end(), srng);
  std::vector<std::uint8_t> split(n, 2);
  const auto n_train = static_cast<std::size_t>(p.train_frac * n);
  const auto n_val = static_cast<std::size_t>(p.val_frac * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      split[order[i]] = 0;
    else if (i < n_train + n_val)
      split[order[i]] = 1;
  }
  return build_graph(n, edges, p.feature_dim, std::move(feats), num_classes,
                     std::move(labels), std::move(split));
}

GraphBundle make_random_regular(std::uint32_t n, std::uint32_t degree, std::uint64_t seed,
                                std::uint64_t num_swaps) {
  if (degree % 2 != 0 || degree >= n)
    throw std::runtime_error("make_random_regular: degree must be even and < n");
  // circulant base: i ~ i +/- 1..degree/2 (mod n)
  std::vector<std::set<NodeId>> adj(n);
  for (NodeId i = 0; i < n; ++i) {
    for (std::uint32_t k = 1; k <= degree / 2; ++k) {
      const NodeId j = static_cast<NodeId>((i + k) % n);
      adj[i].insert(j);
      adj[j].insert(i);
    }
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j : adj[i])
      if (i < j) edges.emplace_back(i, j);

  if (num_swaps == 0) num_swaps = static_cast<std::uint64_t>(edges.size()) * 10;
  Rng rng = make_rng(mix64(seed, 0x4e64));
  std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
  for (std::uint64_t t = 0; t < num_swaps; ++t) {
    const auto ei = pick(rng);
    const auto ej = pick(rng);
    auto [a, b] = edges[ei];
    auto [c, d] = edges[ej];
    // rewire (a,b),(c,d) -> (a,d),(c,b); keep the graph simple
    if (a == c || a == d || b == c || b == d) continue;
    if (adj[a].count(d) || adj[c].count(b)) continue;
    adj[a].erase(b);
    adj[b].erase(a);
    adj[c].erase(d);
    adj[d].erase(c);
    adj[a].insert(d);
    adj[d].insert(a);
    adj[c].insert(b);
    adj[b].insert(c);
    edges[ei] = {std::min(a, d), std::max(a, d)};
    edges[ej] = {std::min(c, b), std::max(c, b)};
  }
  return build_graph(n, edges);
}

GraphBundle with_gaussian_features(GraphBundle g, std::uint32_t dim, std::uint64_t seed) {
  Rng rng = make_rng(mix64(seed, 0x90a55));
  std::normal_distribution<double> gauss(0.0, 1.0);
  g.feature_dim = dim;
  g.features.resize(static_cast<std::size_t>(g.num_nodes) * dim);
  for (auto& x : g.features) x = static_cast<float>(gauss(rng));
  g.validate();
  return g;
}

}  // namespace gscope
