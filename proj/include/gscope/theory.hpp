#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "gscope/extract.hpp"
#include "gscope/graph.hpp"

namespace gscope {

// Stationary objects of the symmetric-normalized propagation on a connected
// self-loop-augmented subgraph: e_u = sqrt(d+(u) / sum d+), delta_hat the
// normalized degree-plus-one distribution, limit_m the infinite-depth
// aggregation at the target, lambda2_abs the second-largest eigenvalue
// magnitude.
struct StationaryProfile {
  Eigen::VectorXd e_vec;
  Eigen::VectorXd delta_hat;
  Eigen::VectorXd limit_m;
  double lambda2_abs = 0.0;
};

StationaryProfile limit_aggregation(const Subgraph& s, const Eigen::MatrixXd& x);

// Target row of Asym^L * X by repeated multiplication (64-bit).
Eigen::VectorXd power_limit(const Subgraph& s, const Eigen::MatrixXd& x, int depth);

// delta_hat^T X: the degree-weighted linear function the random-walk
// propagation converges to.
Eigen::VectorXd target_function(const Subgraph& s, const Eigen::MatrixXd& x);

// L1 distance between the target's row of Arw^L and delta_hat.
double markov_error(const Subgraph& s, int depth);

enum class PhiMode { IDENTITY, INV_SQRT_DEG };

struct DistinctnessReport {
  std::size_t num_targets = 0;
  std::size_t distinct_scopes = 0;       // distinct extracted node sets
  std::size_t distinct_aggregations = 0; // distinct scaled limit aggregations
  std::size_t collisions = 0;  // pairs with different scopes but equal aggregation
};

// Draws X ~ iid standard normal, extracts a scope per node, and compares the
// scaled limit aggregations pairwise at tolerance 1e-9. Graphs are capped at
// 5000 nodes (all-pairs comparison).
DistinctnessReport scope_distinctness(const GraphBundle& g, const ExtractConfig& cfg,
                                      std::uint64_t feature_seed, PhiMode mode,
                                      std::uint32_t feature_dim = 8);

// Same on pre-extracted scopes (subs[v] is node v's scope); lets repeated
// feature draws reuse one extraction pass.
DistinctnessReport scope_distinctness(const GraphBundle& g, const std::vector<Subgraph>& subs,
                                      std::uint64_t feature_seed, PhiMode mode,
                                      std::uint32_t feature_dim = 8);

// ---------------------------------------------------------------------------
// color refinement

struct WlColoring {
  std::vector<std::uint32_t> colors;
  std::uint32_t rounds = 0;  // refinement rounds until the partition stabilized
};

// Signature dictionary shared between refinement runs so that color ids are
// comparable across different (sub)graphs.
using WlDict = std::map<std::pair<std::uint32_t, std::vector<std::uint32_t>>, std::uint32_t>;

struct CsrView {
  std::uint32_t num_nodes = 0;
  const std::uint64_t* indptr = nullptr;
  const NodeId* indices = nullptr;
};

inline CsrView csr_view(const GraphBundle& g) {
  return {g.num_nodes, g.indptr.data(), g.indices.data()};
}
inline CsrView csr_view(const Subgraph& s) {
  return {s.num_nodes(), s.indptr.data(), s.indices.data()};
}

// Classic 1-WL refinement: new color = id of (old color, sorted multiset of
// neighbor colors). Stops when one more round no longer refines the partition
// or after max_rounds. Without a shared dictionary the result is
// canonicalized to first-occurrence color ids.
WlColoring wl_refine(const CsrView& g, const std::vector<std::uint32_t>& init_colors,
                     std::uint32_t max_rounds, WlDict* shared = nullptr);

WlColoring wl_refine(const GraphBundle& g, const std::vector<std::uint32_t>& init_colors,
                     std::uint32_t max_rounds);

// Per-target label of localized refinement: the target's final color paired
// with the subgraph's color histogram, ids drawn from one shared dictionary.
struct LocalWlLabel {
  std::uint32_t target_color = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> histogram;  // (color, count)
  auto operator<=>(const LocalWlLabel&) const = default;
};

std::vector<LocalWlLabel> localized_wl(const GraphBundle& g, const ExtractConfig& cfg,
                                        std::uint32_t rounds);

// ---------------------------------------------------------------------------
// propagation-power sweeps

// K-step symmetric-normalized (self-loop augmented) propagation on the full
// graph, 64-bit.
Eigen::MatrixXd full_graph_propagate(const GraphBundle& g, const Eigen::MatrixXd& x, int k);

Eigen::MatrixXd features_as_matrix(const GraphBundle& g);

// Row i = target row of Asym_[v]^K X_[v] for subs[i]; the per-target feature
// a weight-only model consumes under localized scopes.
Eigen::MatrixXd subgraph_propagated_rows(const GraphBundle& g,
                                         const std::vector<Subgraph>& subs, int k);

struct SgcSweepRow {
  int power = 0;
  double full_acc = 0.0;
  double local_acc = 0.0;
};

// Trains the single weight matrix per power, both on full-graph propagation
// and on per-subgraph propagation, and reports test accuracy.
std::vector<SgcSweepRow> sgc_sweep(const GraphBundle& g, const ExtractConfig& cfg,
                                   const std::vector<int>& powers);

// Least-squares slope / R^2 of y against x (markov_error decay fits).
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace gscope
