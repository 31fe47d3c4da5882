#include <numeric>

#include "doctest.h"
#include "gscope/extract.hpp"
#include "gscope/fixtures.hpp"
#include "gscope/theory.hpp"
#include "oracles.hpp"

using namespace gscope;

namespace {

Subgraph full_scope(const GraphBundle& g, NodeId target) {
  std::vector<NodeId> all(g.num_nodes);
  std::iota(all.begin(), all.end(), 0);
  return induced_subgraph(g, all, target);
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

// second-largest eigenvalue magnitude straight from a dense solve in-test
double lambda2_oracle(const Subgraph& s) {
  const auto adj = norm_adj_dense<double>(s, NormKind::SYM);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(adj);
  std::vector<double> mags;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    mags.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  return mags.size() > 1 ? mags[1] : 0.0;
}

std::vector<std::vector<NodeId>> partition_of(const std::vector<std::uint32_t>& colors) {
  std::map<std::uint32_t, std::vector<NodeId>> groups;
  for (NodeId v = 0; v < colors.size(); ++v) groups[colors[v]].push_back(v);
  std::vector<std::vector<NodeId>> out;
  for (auto& [c, nodes] : groups) out.push_back(nodes);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("limit aggregation closed forms") {
  SUBCASE("singleton keeps its own feature") {
    const auto g = fixture_triangle();
    const auto s = induced_subgraph(g, {1}, 1);
    const Eigen::MatrixXd x = gaussian(1, 4, 1);
    const auto prof = limit_aggregation(s, x);
    CHECK((prof.limit_m - x.row(0).transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(prof.e_vec[0] == doctest::Approx(1.0));
  }
  SUBCASE("triangle averages the three rows") {
    const auto g = fixture_triangle();
    const auto s = full_scope(g, 0);
    const Eigen::MatrixXd x = gaussian(3, 4, 2);
    const auto prof = limit_aggregation(s, x);
    const Eigen::VectorXd expect = x.colwise().sum().transpose() / 3.0;
    CHECK((prof.limit_m - expect).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(prof.e_vec.norm() == doctest::Approx(1.0));
    CHECK(prof.delta_hat.sum() == doctest::Approx(1.0));
    CHECK(prof.lambda2_abs < 1.0);
  }
  SUBCASE("four-node star from the hub: 0.4 x_hub + sqrt(0.08) sum of leaves") {
    const auto g = fixture_star(3);
    const auto s = full_scope(g, 0);
    const Eigen::MatrixXd x = gaussian(4, 3, 3);
    const auto prof = limit_aggregation(s, x);
    Eigen::VectorXd expect = 0.4 * x.row(s.target_local).transpose();
    for (NodeId u = 0; u < 4; ++u)
      if (u != s.target_local) expect += std::sqrt(0.08) * x.row(u).transpose();
    CHECK((prof.limit_m - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("power limit") {
  const auto g = fixture_triangle();
  const auto s = full_scope(g, 0);
  const Eigen::MatrixXd x = gaussian(3, 4, 4);
  SUBCASE("zero steps return the target row") {
    CHECK(power_limit(s, x, 0) == x.row(s.target_local).transpose());
  }
  SUBCASE("fifty steps on a triangle reach the closed form") {
    const auto prof = limit_aggregation(s, x);
    CHECK((power_limit(s, x, 50) - prof.limit_m).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("one step on the 2-path averages the rows") {
    const auto p = fixture_path(2);
    const auto s2 = full_scope(p, 0);
    const Eigen::MatrixXd x2 = gaussian(2, 3, 5);
    const Eigen::VectorXd expect = (x2.row(0) + x2.row(1)).transpose() / 2.0;
    CHECK((power_limit(s2, x2, 1) - expect).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("decay toward the limit is geometric in lambda2") {
    const auto k = fixture_karate();
    const auto sk = full_scope(k, 0);
    const Eigen::MatrixXd xk = gaussian(34, 3, 6);
    const auto prof = limit_aggregation(sk, xk);
    const double l2 = lambda2_oracle(sk);
    std::vector<double> xs, ys;
    for (int depth = 5; depth <= 30; ++depth) {
      const double err = (power_limit(sk, xk, depth) - prof.limit_m).norm();
      if (err <= 1e-14) break;
      xs.push_back(depth);
      ys.push_back(std::log(err));
    }
    const auto fit = fit_line(xs, ys);
    CHECK(fit.slope <= std::log(l2) + 0.05);
    CHECK(fit.r2 >= 0.98);
  }
}

TEST_CASE("target function") {
  const auto g = fixture_triangle();
  SUBCASE("singleton") {
    const auto s = induced_subgraph(g, {2}, 2);
    const Eigen::MatrixXd x = gaussian(1, 3, 7);
    CHECK((target_function(s, x) - x.row(0).transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("triangle means the features") {
    const auto s = full_scope(g, 1);
    const Eigen::MatrixXd x = gaussian(3, 3, 8);
    const Eigen::VectorXd expect = x.colwise().mean().transpose();
    CHECK((target_function(s, x) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("2-path means the two rows") {
    const auto p = fixture_path(2);
    const auto s = full_scope(p, 0);
    const Eigen::MatrixXd x = gaussian(2, 3, 9);
    const Eigen::VectorXd expect = (x.row(0) + x.row(1)).transpose() / 2.0;
    CHECK((target_function(s, x) - expect).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("random-walk convergence error") {
  SUBCASE("singleton is exactly stationary") {
    const auto g = fixture_triangle();
    const auto s = induced_subgraph(g, {0}, 0);
    for (int depth : {0, 1, 5, 40}) CHECK(markov_error(s, depth) == 0.0);
  }
  SUBCASE("triangle rows are uniform after one step") {
    const auto g = fixture_triangle();
    const auto s = full_scope(g, 0);
    CHECK(markov_error(s, 1) <= 1e-15);
  }
  SUBCASE("path-end error decays at the oracle rate") {
    const auto g = fixture_path(4);
    const auto s = full_scope(g, 0);
    const double l2 = lambda2_oracle(s);
    double prev = markov_error(s, 5);
    for (int depth = 6; depth <= 25; ++depth) {
      const double cur = markov_error(s, depth);
      CHECK(cur < prev);
      CHECK(cur <= (l2 + 0.05) * prev);
      prev = cur;
    }
  }
}

TEST_CASE("scope distinctness") {
  const auto karate = fixture_karate();
  SUBCASE("distinct scopes never share an aggregation") {
    ExtractConfig cfg;
    cfg.members = {PprConfig{.top_k = 16}};
    const auto rep = scope_distinctness(karate, cfg, 11, PhiMode::IDENTITY, 6);
    CHECK(rep.collisions == 0);
    // automorphic twins (e.g. nodes 14/15) share their whole top-16 set, so
    // only 21 of the 34 scopes are distinct here; the guarantee is only that
    // differing scopes differ in aggregation
    CHECK(rep.distinct_scopes == 21);
    CHECK(rep.distinct_aggregations >= rep.distinct_scopes);
    const auto rep2 = scope_distinctness(karate, cfg, 12, PhiMode::INV_SQRT_DEG, 6);
    CHECK(rep2.collisions == 0);
  }
  SUBCASE("pairwise-distinct scopes give one aggregation per node") {
    // closed 1-hop neighborhoods contain their target, so they are pairwise
    // distinct on karate; the distinct-value count then reaches |V|
    ExtractConfig cfg;
    cfg.members = {KHopConfig{.depth = 1, .budget = kUnlimitedBudget}};
    const auto rep = scope_distinctness(karate, cfg, 15, PhiMode::IDENTITY, 6);
    CHECK(rep.distinct_scopes == 34);
    CHECK(rep.distinct_aggregations == 34);
    CHECK(rep.collisions == 0);
  }
  SUBCASE("full scope on the cubic fixture collapses to one value") {
    const auto cubic = fixture_eight_node_cubic();
    ExtractConfig cfg;
    cfg.members = {KHopConfig{.depth = 8, .budget = kUnlimitedBudget}};
    const auto rep = scope_distinctness(cubic, cfg, 13, PhiMode::IDENTITY, 6);
    CHECK(rep.distinct_scopes == 1);
    CHECK(rep.distinct_aggregations == 1);
    CHECK(rep.collisions == 0);  // identical scopes are not collisions
  }
  SUBCASE("size-capped scopes keep at least |V|/cap distinct values") {
    ExtractConfig cfg;
    cfg.members = {PprConfig{.top_k = 8}};
    const auto rep = scope_distinctness(karate, cfg, 14, PhiMode::IDENTITY, 6);
    CHECK(rep.distinct_aggregations >= (34 + 7) / 8);
  }
  SUBCASE("oversized graphs are rejected") {
    SbmParams p;
    p.nodes_per_block = 2600;
    p.num_blocks = 2;
    p.p_intra = 0.002;
    p.p_inter = 0.0005;
    p.feature_dim = 1;
    const auto big = make_sbm(p);
    ExtractConfig cfg;
    cfg.members = {PprConfig{.top_k = 4}};
    CHECK_THROWS(scope_distinctness(big, cfg, 0, PhiMode::IDENTITY, 2));
  }
}

TEST_CASE("color refinement basics") {
  SUBCASE("regular graph keeps one class") {
    const auto g = fixture_eight_node_cubic();
    const auto wl = wl_refine(g, std::vector<std::uint32_t>(8, 0), 20);
    CHECK(partition_of(wl.colors).size() == 1);
    CHECK(wl.rounds == 0);
  }
  SUBCASE("star splits hub from leaves in one round") {
    const auto g = fixture_star(3);
    const auto wl = wl_refine(g, std::vector<std::uint32_t>(4, 0), 20);
    CHECK(partition_of(wl.colors).size() == 2);
    CHECK(wl.rounds == 1);
  }
  SUBCASE("all-distinct initial colors are already stable") {
    const auto g = fixture_karate();
    std::vector<std::uint32_t> init(g.num_nodes);
    std::iota(init.begin(), init.end(), 0);
    const auto wl = wl_refine(g, init, 20);
    CHECK(wl.rounds == 0);
    CHECK(partition_of(wl.colors) == partition_of(init));
  }
  SUBCASE("partition is permutation equivariant") {
    const auto g = fixture_karate();
    const auto wl = wl_refine(g, std::vector<std::uint32_t>(g.num_nodes, 0), 20);
    // relabel nodes by a seeded permutation and refine again
    std::vector<NodeId> perm(g.num_nodes);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(21);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 0; u < g.num_nodes; ++u)
      for (NodeId w : g.neighbors(u))
        if (u < w) edges.emplace_back(perm[u], perm[w]);
    const auto pg = build_graph(g.num_nodes, edges);
    const auto pwl = wl_refine(pg, std::vector<std::uint32_t>(g.num_nodes, 0), 20);
    // map the permuted partition back and compare as partitions
    std::vector<std::uint32_t> mapped(g.num_nodes);
    for (NodeId v = 0; v < g.num_nodes; ++v) mapped[v] = pwl.colors[perm[v]];
    CHECK(partition_of(mapped) == partition_of(wl.colors));
  }
}

TEST_CASE("localized refinement labels") {
  ExtractConfig one_hop;
  one_hop.members = {KHopConfig{.depth = 1, .budget = kUnlimitedBudget}};
  SUBCASE("cubic fixture: targets 0 and 2 differ with two rounds") {
    const auto g = fixture_eight_node_cubic();
    const auto labels = localized_wl(g, one_hop, 2);
    CHECK(labels[0] != labels[2]);
  }
  SUBCASE("two-component 2-regular: cycle vs triangle nodes differ") {
    const auto g = fixture_two_component_2regular();
    const auto labels = localized_wl(g, one_hop, 2);
    CHECK(labels[0] != labels[6]);
    // global refinement sees a single class on this graph
    const auto wl = wl_refine(g, std::vector<std::uint32_t>(9, 0), 20);
    CHECK(partition_of(wl.colors).size() == 1);
  }
  SUBCASE("complete graph: all targets identical") {
    const auto g = fixture_complete(4);
    const auto labels = localized_wl(g, one_hop, 2);
    for (NodeId v = 1; v < 4; ++v) CHECK(labels[v] == labels[0]);
  }
  SUBCASE("at least as discriminative as global refinement on karate") {
    const auto g = fixture_karate();
    const std::uint32_t rounds = 3;
    const auto wl = wl_refine(g, std::vector<std::uint32_t>(g.num_nodes, 0), rounds);
    ExtractConfig full_hop;
    full_hop.members = {KHopConfig{.depth = rounds, .budget = kUnlimitedBudget}};
    const auto labels = localized_wl(g, full_hop, rounds);
    for (NodeId u = 0; u < g.num_nodes; ++u)
      for (NodeId v = u + 1; v < g.num_nodes; ++v)
        if (wl.colors[u] != wl.colors[v]) CHECK(labels[u] != labels[v]);
  }
}

TEST_CASE("full-graph propagation agrees with the dense subgraph route") {
  const auto g = fixture_karate();
  const Eigen::MatrixXd x = gaussian(g.num_nodes, 5, 31);
  const auto s = full_scope(g, 0);
  for (int k : {0, 1, 3, 7}) {
    const auto full = full_graph_propagate(g, x, k);
    const auto row = power_limit(s, x, k);  // dense normalized-adjacency route
    CHECK((full.row(0).transpose() - row).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("propagation-power sweep plumbing: zero power ties both variants") {
  SbmParams p;
  p.nodes_per_block = 60;
  p.num_blocks = 2;
  p.p_intra = 0.1;
  p.p_inter = 0.02;
  p.feature_dim = 4;
  p.mean_shift = 1.5;
  p.seed = 4;
  const auto g = make_sbm(p);
  ExtractConfig cfg;
  cfg.members = {PprConfig{.top_k = 8}};
  const auto table = sgc_sweep(g, cfg, {0});
  REQUIRE(table.size() == 1);
  // at power zero both pipelines train on the raw features
  CHECK(table[0].full_acc == table[0].local_acc);
}

TEST_CASE("repeated full-graph propagation collapses scaled rows") {
  // the degree-normalized rows (the phi = deg^-1/2 view named by the theory)
  // lose all pairwise spread at high powers, while bounded-scope rows keep
  // inter-class separation
  SbmParams p;
  p.nodes_per_block = 100;
  p.num_blocks = 20;
  p.p_intra = 0.1;
  p.p_inter = 0.004;
  p.label_mod = 2;
  p.feature_dim = 8;
  p.mean_shift = 1.0;
  p.seed = 1;
  const auto g = make_sbm(p);
  const auto x = features_as_matrix(g);

  auto scale_rows = [&](Eigen::MatrixXd f) {
    for (NodeId v = 0; v < g.num_nodes; ++v) f.row(v) /= std::sqrt(g.degree(v) + 1.0);
    return f;
  };
  auto max_pair = [&](const Eigen::MatrixXd& f) {
    double m = 0;
    for (NodeId i = 0; i < g.num_nodes; i += 7)
      for (NodeId j = i + 1; j < g.num_nodes; j += 13)
        m = std::max(m, (f.row(i) - f.row(j)).norm());
    return m;
  };
  const double spread1 = max_pair(scale_rows(full_graph_propagate(g, x, 1)));
  const double spread40 = max_pair(scale_rows(full_graph_propagate(g, x, 40)));
  CHECK(spread40 <= 1e-3 * spread1);

  ExtractConfig cfg;
  cfg.members = {PprConfig{.top_k = 32}};
  std::vector<NodeId> all(g.num_nodes);
  std::iota(all.begin(), all.end(), 0);
  const auto subs = extract_batch(g, all, cfg);
  const Eigen::MatrixXd rows = scale_rows(subgraph_propagated_rows(g, subs, 40));
  double min_inter = std::numeric_limits<double>::infinity();
  for (NodeId i = 0; i < g.num_nodes; i += 7)
    for (NodeId j = i + 1; j < g.num_nodes; j += 13)
      if (g.labels[i] != g.labels[j])
        min_inter = std::min(min_inter, (rows.row(i) - rows.row(j)).norm());
  CHECK(min_inter > 10.0 * spread40);
}

TEST_CASE("line fit recovers exact lines") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(i);
    ys.push_back(3.5 - 0.25 * i);
  }
  const auto fit = fit_line(xs, ys);
  CHECK(fit.slope == doctest::Approx(-0.25));
  CHECK(fit.intercept == doctest::Approx(3.5));
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK_THROWS(fit_line({1.0}, {2.0}));
}
