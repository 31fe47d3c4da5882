#pragma once

#include <cstdint>

#include "gscope/graph.hpp"

namespace gscope {

// Deterministic small graphs used by the verification suite and tests.
// None carry features unless stated; attach via with_gaussian_features.

// 8-node 3-regular graph: the 8-cycle plus chords (0,4),(1,7),(3,6),(2,5).
GraphBundle fixture_eight_node_cubic();

// Two-component 2-regular graph: 6-cycle on {0..5} plus triangle {6,7,8}.
GraphBundle fixture_two_component_2regular();

GraphBundle fixture_triangle();
GraphBundle fixture_path(std::uint32_t n);
GraphBundle fixture_star(std::uint32_t leaves);  // node 0 is the hub
GraphBundle fixture_complete(std::uint32_t n);

// Zachary karate club (34 nodes, 78 undirected edges).
GraphBundle fixture_karate();

struct SbmParams {
  std::uint32_t nodes_per_block = 1000;
  std::uint32_t num_blocks = 2;
  double p_intra = 0.02;
  double p_inter = 0.002;
  // 0: label = block id. Otherwise label = block % label_mod, so many blocks
  // can share a class and the class contrast is not a top eigenvector.
  std::uint32_t label_mod = 0;
  std::uint32_t feature_dim = 8;
  double mean_shift = 1.0;  // offset on the first two coords, sign by label parity
  double train_frac = 0.5;
  double val_frac = 0.25;
  std::uint64_t seed = 1;
};

// Stochastic block model with class-mean-shifted Gaussian features and a
// random train/val/test split. Fully seeded.
GraphBundle make_sbm(const SbmParams& p);

// Random d-regular simple graph: a circulant base mixed by seeded
// double-edge swaps. degree must be even and < n. Connected by construction
// start; callers needing certainty should check reachability.
GraphBundle make_random_regular(std::uint32_t n, std::uint32_t degree, std::uint64_t seed,
                                std::uint64_t num_swaps = 0);

// Adds i.i.d. standard normal features (64-bit draws rounded to f32).
GraphBundle with_gaussian_features(GraphBundle g, std::uint32_t dim, std::uint64_t seed);

}  // namespace gscope
