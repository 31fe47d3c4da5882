#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "gscope/graph.hpp"
#include "gscope/types.hpp"

namespace gscope {

inline constexpr std::uint32_t kUnlimitedBudget = 0xffffffffu;

struct KHopConfig {
  std::uint32_t depth = 2;
  std::uint32_t budget = kUnlimitedBudget;  // neighbors kept per node per hop
};

struct PprConfig {
  std::uint32_t top_k = 200;
  std::optional<double> threshold;  // when set, take score > threshold up to cap
  std::uint32_t cap = 200;
  double alpha = 0.15;    // restart probability
  double epsilon = 1e-4;  // push tolerance
};

using ExtractVariant = std::variant<KHopConfig, PprConfig>;

// One member = plain extractor; several members = subgraph ensemble (one
// branch per member). Randomness for target t is drawn from a stream seeded
// by (seed, branch, t), so batches are schedule-independent.
struct ExtractConfig {
  std::vector<ExtractVariant> members = {PprConfig{}};
  std::uint64_t seed = 0;

  bool is_ensemble() const { return members.size() > 1; }
  void validate() const;
};

// Approximate personalized-pagerank state produced by local forward push on
// the self-loop-augmented random walk around one seed node.
struct PprState {
  NodeId seed = 0;
  std::unordered_map<NodeId, double> estimate;
  std::unordered_map<NodeId, double> residual;
  double alpha = 0.15;
  double epsilon = 1e-4;
  std::size_t touched = 0;  // distinct nodes with residual ever > 0

  // Checks nonnegativity, mass conservation (sum est + sum res == 1 within
  // 1e-9) and the push termination condition res(u) < epsilon * (deg(u)+1).
  void validate(const GraphBundle& g) const;
};

PprState approximate_ppr(const GraphBundle& g, NodeId v, double alpha, double epsilon);

// Top-k (or thresholded, capped) node selection by descending score; ties by
// ascending node id; the seed node is always included.
std::vector<NodeId> select_neighbors(const PprState& p, std::uint32_t top_k,
                                     std::optional<double> threshold, std::uint32_t cap);

Subgraph extract_ppr(const GraphBundle& g, NodeId v, const PprConfig& cfg);

Subgraph extract_khop(const GraphBundle& g, NodeId v, std::uint32_t depth,
                      std::uint32_t budget, std::uint64_t seed);

Subgraph extract_one(const GraphBundle& g, NodeId v, const ExtractVariant& m,
                     std::uint64_t seed);

// One subgraph per target, parallel over targets, bytes identical to serial
// execution for any worker count.
std::vector<Subgraph> extract_batch(const GraphBundle& g, const std::vector<NodeId>& targets,
                                    const ExtractConfig& cfg);

// Ensemble form: result[branch][i] is the member-branch subgraph of targets[i].
std::vector<std::vector<Subgraph>> extract_batch_ensemble(const GraphBundle& g,
                                                          const std::vector<NodeId>& targets,
                                                          const ExtractConfig& cfg);

// Training-time edge perturbation: each undirected edge dropped independently
// with probability p_drop (both directions together); target always kept; the
// result is trimmed back to target's component.
Subgraph dropedge(const Subgraph& s, double p_drop, Rng& rng);

// Subgraph cache: little-endian, length-prefixed records of
// (target id, node list, local CSR).
void write_subgraph_cache(const std::string& path, const std::vector<Subgraph>& subgraphs);
std::vector<Subgraph> read_subgraph_cache(const std::string& path);

}  // namespace gscope
