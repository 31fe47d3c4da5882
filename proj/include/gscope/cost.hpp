#pragma once

#include <cstdint>
#include <vector>

#include "gscope/graph.hpp"
#include "gscope/model.hpp"

namespace gscope {

// Exact MAC counts per layer. Multiplications by the normalized adjacency
// count one MAC per stored entry (edge message), self-loops included; the
// weight transform counts n * d_in * d_out. Activation, bias and
// normalization bookkeeping are excluded.
std::uint64_t cost_gcn_layer(std::uint64_t m, std::uint64_t n_out, std::uint64_t d_in,
                             std::uint64_t d_out);
std::uint64_t cost_sage_layer(std::uint64_t m, std::uint64_t n_out, std::uint64_t d_in,
                              std::uint64_t d_out);
// Head count cancels in the derived GAT form: 3 m d_out + n_in d_in d_out.
std::uint64_t cost_gat_layer(std::uint64_t m, std::uint64_t n_in, std::uint64_t d_in,
                             std::uint64_t d_out);

enum class CostRegime { NORMAL_LHOP, BOUNDED };

// Layer-wise node/message counts feeding the cost pipeline, summed over a
// target set (exact integers; divide by num_targets for per-node figures).
struct ScopeStats {
  struct Layer {
    std::uint64_t n_in = 0, n_out = 0, m = 0;
  };
  std::vector<Layer> layers;
  std::uint64_t num_targets = 1;
};

// BOUNDED scope: every layer sees the whole subgraph, so all layers carry the
// same (n, m) with m = stored edge entries + n self-loops.
ScopeStats bounded_scope_stats(const std::vector<Subgraph>& subs, int num_layers);

struct HopProfile {
  std::uint32_t depth = 0;
  std::uint64_t num_targets = 0;
  std::vector<double> avg_count;  // nodes at exactly hop 0..depth (mean per target)
  std::vector<double> fraction;   // avg_count normalized to sum 1
  ScopeStats normal_stats;        // layer l consumes the hop-(L-l+1..) frontier
};

// BFS expansion from each target, optionally budgeted like the k-hop sampler.
// Also derives the recursive minibatch layer stats of a depth-L model: layer
// l outputs the nodes within L-l hops, each aggregating deg+1 messages.
HopProfile hop_expansion(const GraphBundle& g, const std::vector<NodeId>& targets,
                         std::uint32_t depth, std::uint32_t budget = kUnlimitedBudget,
                         std::uint64_t seed = 0);

struct CostReport {
  CostRegime regime = CostRegime::BOUNDED;
  struct LayerCost {
    std::uint64_t n_in = 0, n_out = 0, m = 0, d_in = 0, d_out = 0;
    std::uint64_t macs = 0;
  };
  std::vector<LayerCost> layers;
  std::uint64_t layer_total = 0;
  std::uint64_t head_macs = 0;  // pooling + readout perceptron, BOUNDED only
  std::uint64_t total_macs = 0;
  std::uint64_t num_targets = 1;

  double per_target() const {
    return static_cast<double>(total_macs) / static_cast<double>(num_targets);
  }
};

// Uniform width d across layers. BOUNDED runs num_layers identical layers on
// constant (n, m) plus a separately-reported head (mean-pool n*d and a
// 2d -> d perceptron per target); NORMAL_LHOP has a shrinking frontier and no
// subgraph head. Extraction cost is not included.
CostReport inference_cost(Arch arch, int num_layers, std::uint64_t d, CostRegime regime,
                          const ScopeStats& stats);

}  // namespace gscope
