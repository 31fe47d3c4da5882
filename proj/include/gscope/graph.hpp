#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gscope/types.hpp"

namespace gscope {

// Immutable undirected graph in CSR form plus node features / labels / split
// masks. Adjacency is stored symmetric, deduplicated, self-loop free, with
// neighbor ids sorted ascending per row. Safe to share across threads after
// construction.
struct GraphBundle {
  std::uint32_t num_nodes = 0;
  std::vector<std::uint64_t> indptr;  // length num_nodes + 1
  std::vector<NodeId> indices;        // strictly increasing within each row

  std::uint32_t feature_dim = 0;
  std::vector<float> features;  // row-major [num_nodes x feature_dim]

  std::uint32_t num_classes = 0;
  std::vector<std::uint32_t> labels;  // empty when absent
  std::vector<std::uint8_t> split;    // 0 train / 1 val / 2 test / 3 none; empty when absent

  std::uint64_t num_edges() const { return indices.size() / 2; }  // undirected count

  std::uint32_t degree(NodeId u) const {
    return static_cast<std::uint32_t>(indptr[u + 1] - indptr[u]);
  }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {indices.data() + indptr[u], indices.data() + indptr[u + 1]};
  }

  std::span<const float> feature_row(NodeId u) const {
    return {features.data() + static_cast<std::size_t>(u) * feature_dim, feature_dim};
  }

  bool has_labels() const { return !labels.empty(); }
  bool has_split() const { return !split.empty(); }

  std::vector<NodeId> split_nodes(std::uint8_t which) const;

  // Throws std::runtime_error on any broken invariant.
  void validate() const;
};

// Induced local graph around one target node, with local<->global id maps.
// The local CSR mirrors GraphBundle conventions (symmetric, sorted, no
// self-loops). Always connected from the target.
struct Subgraph {
  NodeId target_local = 0;
  std::vector<NodeId> globals;  // local id -> global id, no duplicates
  std::vector<std::uint64_t> indptr;
  std::vector<NodeId> indices;  // local ids

  std::uint32_t num_nodes() const { return static_cast<std::uint32_t>(globals.size()); }
  std::uint64_t num_edges() const { return indices.size() / 2; }

  std::uint32_t degree(NodeId local) const {
    return static_cast<std::uint32_t>(indptr[local + 1] - indptr[local]);
  }

  // Degree inside the subgraph plus one (the self-loop-augmented degree).
  std::uint32_t deg_plus_one(NodeId local) const { return degree(local) + 1; }

  std::span<const NodeId> neighbors(NodeId local) const {
    return {indices.data() + indptr[local], indices.data() + indptr[local + 1]};
  }

  NodeId target_global() const { return globals[target_local]; }

  bool operator==(const Subgraph& other) const = default;
};

enum class NormKind { SYM, RW };

// Normalized adjacency of a subgraph, always augmented with self-loops.
// SYM: (D+I)^(-1/2) (A+I) (D+I)^(-1/2); RW: (D+I)^(-1) (A+I).
struct NormAdj {
  NormKind kind = NormKind::SYM;
  Eigen::MatrixXd dense;
};

// Build a validated bundle from an (optionally directed) edge list. Edges are
// symmetrized (union of both directions), deduplicated, and self-loops
// stripped. Features/labels/split may be empty.
GraphBundle build_graph(std::uint32_t num_nodes,
                        const std::vector<std::pair<NodeId, NodeId>>& edges,
                        std::uint32_t feature_dim = 0, std::vector<float> features = {},
                        std::uint32_t num_classes = 0, std::vector<std::uint32_t> labels = {},
                        std::vector<std::uint8_t> split = {});

// Bundle directory I/O: meta.json + indptr.bin (u64le) + indices.bin (u32le)
// + feats.bin (f32le) + optional labels.bin (u32le) / split.bin (u8).
GraphBundle load_graph(const std::string& dir);
void save_graph(const GraphBundle& g, const std::string& dir);

// TSV ingestion for small fixtures. Edge list: "u<TAB>v" per line ('#'
// comments allowed). Features: one row of reals per node. Labels: one class
// id per line. Split: one of 0/1/2/3 or train/val/test/none per line.
std::vector<std::pair<NodeId, NodeId>> load_edge_tsv(const std::string& path,
                                                     NodeId* max_id_seen);
std::vector<float> load_feature_tsv(const std::string& path, std::uint32_t* dim,
                                    std::uint32_t* rows);
std::vector<std::uint32_t> load_label_tsv(const std::string& path);
std::vector<std::uint8_t> load_split_tsv(const std::string& path);

// Induced subgraph on node_set around target. If node_set is disconnected,
// only target's connected component is kept; num_trimmed (when non-null)
// receives the number of dropped nodes.
Subgraph induced_subgraph(const GraphBundle& g, const std::vector<NodeId>& node_set,
                          NodeId target, std::uint32_t* num_trimmed = nullptr);

NormAdj normalize(const Subgraph& s, NormKind kind);

// Same normalization in an arbitrary scalar type (float for model kernels).
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> norm_adj_dense(const Subgraph& s,
                                                                NormKind kind) {
  const auto n = static_cast<Eigen::Index>(s.num_nodes());
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> a =
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  for (NodeId u = 0; u < s.num_nodes(); ++u) {
    const S du = static_cast<S>(s.deg_plus_one(u));
    if (kind == NormKind::RW) {
      a(u, u) = S(1) / du;
      for (NodeId w : s.neighbors(u)) a(u, w) = S(1) / du;
    } else {
      a(u, u) = S(1) / du;
      for (NodeId w : s.neighbors(u)) {
        a(u, w) = S(1) / (std::sqrt(du) * std::sqrt(static_cast<S>(s.deg_plus_one(w))));
      }
    }
  }
  return a;
}

// BFS distances from target inside the subgraph.
std::vector<std::uint32_t> bfs_distances(const Subgraph& s);

// Depth of the subgraph: max shortest-path distance from any node to target.
std::uint32_t subgraph_depth(const Subgraph& s);

// Feature rows of the subgraph as a dense matrix (double for theory math).
Eigen::MatrixXd subgraph_features(const GraphBundle& g, const Subgraph& s);

}  // namespace gscope
