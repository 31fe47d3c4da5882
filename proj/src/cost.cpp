#include "gscope/cost.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>
#include <unordered_set>

namespace gscope {

namespace {

using u128 = unsigned __int128;

std::uint64_t narrow(u128 x) {
  if (x > static_cast<u128>(UINT64_MAX)) throw std::overflow_error("mac count overflow");
  return static_cast<std::uint64_t>(x);
}

}  // namespace

std::uint64_t cost_gcn_layer(std::uint64_t m, std::uint64_t n_out, std::uint64_t d_in,
                             std::uint64_t d_out) {
  return narrow(static_cast<u128>(m) * d_in + static_cast<u128>(n_out) * d_in * d_out);
}

std::uint64_t cost_sage_layer(std::uint64_t m, std::uint64_t n_out, std::uint64_t d_in,
                              std::uint64_t d_out) {
  return narrow(static_cast<u128>(m) * d_in + 2 * static_cast<u128>(n_out) * d_in * d_out);
}

std::uint64_t cost_gat_layer(std::uint64_t m, std::uint64_t n_in, std::uint64_t d_in,
                             std::uint64_t d_out) {
  return narrow(3 * static_cast<u128>(m) * d_out + static_cast<u128>(n_in) * d_in * d_out);
}

ScopeStats bounded_scope_stats(const std::vector<Subgraph>& subs, int num_layers) {
  ScopeStats st;
  st.num_targets = subs.empty() ? 1 : subs.size();
  std::uint64_t n = 0, m = 0;
  for (const auto& s : subs) {
    n += s.num_nodes();
    m += s.indices.size() + s.num_nodes();  // stored entries + self-loops
  }
  st.layers.assign(num_layers, {n, n, m});
  return st;
}

HopProfile hop_expansion(const GraphBundle& g, const std::vector<NodeId>& targets,
                         std::uint32_t depth, std::uint32_t budget, std::uint64_t seed) {
  if (depth < 1) throw std::runtime_error("hop_expansion: depth must be >= 1");
  HopProfile prof;
  prof.depth = depth;
  prof.num_targets = targets.size();
  std::vector<std::uint64_t> hop_totals(depth + 1, 0);
  // ball[k] = total nodes within k hops; msgs[k] = total deg+1 over that ball
  std::vector<std::uint64_t> ball_totals(depth + 1, 0);
  std::vector<std::uint64_t> msg_totals(depth + 1, 0);

  for (NodeId t : targets) {
    std::unordered_set<NodeId> seen{t};
    std::vector<NodeId> frontier{t};
    std::uint64_t ball = 1;
    std::uint64_t msgs = g.degree(t) + 1;
    hop_totals[0] += 1;
    ball_totals[0] += ball;
    msg_totals[0] += msgs;
    for (std::uint32_t hop = 1; hop <= depth; ++hop) {
      std::vector<NodeId> next;
      for (NodeId u : frontier) {
        auto nb = g.neighbors(u);
        std::vector<NodeId> chosen(nb.begin(), nb.end());
        if (budget != kUnlimitedBudget && chosen.size() > budget) {
          Rng rng = make_rng(mix64(seed, mix64(t, u), hop));
          chosen = sample_without_replacement(std::move(chosen), budget, rng);
        }
        for (NodeId w : chosen) {
          if (seen.insert(w).second) next.push_back(w);
        }
      }
      std::sort(next.begin(), next.end());
      hop_totals[hop] += next.size();
      ball += next.size();
      for (NodeId w : next) {
        const std::uint64_t deg =
            budget == kUnlimitedBudget ? g.degree(w) : std::min(g.degree(w), budget);
        msgs += deg + 1;
      }
      ball_totals[hop] += ball;
      msg_totals[hop] += msgs;
      frontier = std::move(next);
    }
  }

  const double nt = std::max<std::uint64_t>(1, targets.size());
  double total = 0.0;
  for (auto c : hop_totals) total += static_cast<double>(c);
  for (std::uint32_t h = 0; h <= depth; ++h) {
    prof.avg_count.push_back(static_cast<double>(hop_totals[h]) / nt);
    prof.fraction.push_back(total > 0 ? static_cast<double>(hop_totals[h]) / total : 0.0);
  }

  prof.normal_stats.num_targets = std::max<std::uint64_t>(1, targets.size());
  prof.normal_stats.layers.resize(depth);
  for (std::uint32_t l = 1; l <= depth; ++l) {
    auto& layer = prof.normal_stats.layers[l - 1];
    layer.n_in = ball_totals[depth - l + 1];
    layer.n_out = ball_totals[depth - l];
    layer.m = msg_totals[depth - l];
  }
  return prof;
}

CostReport inference_cost(Arch arch, int num_layers, std::uint64_t d, CostRegime regime,
                          const ScopeStats& stats) {
  if (static_cast<int>(stats.layers.size()) != num_layers)
    throw std::runtime_error("inference_cost: stats layer count != num_layers");
  CostReport rep;
  rep.regime = regime;
  rep.num_targets = stats.num_targets;
  u128 layer_total = 0;
  for (const auto& l : stats.layers) {
    CostReport::LayerCost lc;
    lc.n_in = l.n_in;
    lc.n_out = l.n_out;
    lc.m = l.m;
    lc.d_in = d;
    lc.d_out = d;
    switch (arch) {
      case Arch::GCN:
      case Arch::GIN:
      case Arch::SGC:
        lc.macs = cost_gcn_layer(l.m, l.n_out, d, d);
        break;
      case Arch::SAGE:
        lc.macs = cost_sage_layer(l.m, l.n_out, d, d);
        break;
      case Arch::GAT:
        lc.macs = cost_gat_layer(l.m, l.n_in, d, d);
        break;
    }
    layer_total += lc.macs;
    rep.layers.push_back(lc);
  }
  rep.layer_total = narrow(layer_total);
  if (regime == CostRegime::BOUNDED) {
    // mean-pool over the subgraph plus the 2d -> d readout perceptron
    const u128 pool = static_cast<u128>(stats.layers.empty() ? 0 : stats.layers[0].n_out) * d;
    const u128 mlp = static_cast<u128>(2) * d * d * stats.num_targets;
    rep.head_macs = narrow(pool + mlp);
  }
  rep.total_macs = narrow(static_cast<u128>(rep.layer_total) + rep.head_macs);
  return rep;
}

}  // namespace gscope
