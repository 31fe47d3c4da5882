#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gscope/fixtures.hpp"
#include "gscope/graph.hpp"
#include "oracles.hpp"

using namespace gscope;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("gscope_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("two-node path layout") {
  const auto g = build_graph(2, {{0, 1}});
  CHECK(g.indptr == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(g.indices == std::vector<NodeId>{1, 0});
  CHECK(g.num_edges() == 1);
}

TEST_CASE("eight-node fixture is 3-regular") {
  const auto g = fixture_eight_node_cubic();
  REQUIRE(g.num_nodes == 8);
  for (NodeId v = 0; v < 8; ++v) CHECK(g.degree(v) == 3);
}

TEST_CASE("directed input rows are symmetrized and deduplicated") {
  const auto g = build_graph(2, {{0, 1}, {0, 1}, {1, 0}});
  CHECK(g.num_edges() == 1);
  CHECK(g.indices == std::vector<NodeId>{1, 0});
}

TEST_CASE("raw self-loops are stripped on build") {
  const auto g = build_graph(3, {{0, 0}, {0, 1}, {1, 2}});
  CHECK(g.num_edges() == 2);
  for (NodeId v = 0; v < 3; ++v)
    for (NodeId w : g.neighbors(v)) CHECK(w != v);
}

TEST_CASE("validate rejects broken structures") {
  GraphBundle g = fixture_triangle();
  SUBCASE("asymmetric") {
    g.indices[0] = 2;  // row 0 now {2,2}: duplicates + asymmetry
    CHECK_THROWS(g.validate());
  }
  SUBCASE("indptr end mismatch") {
    g.indptr.back() = 99;
    CHECK_THROWS(g.validate());
  }
  SUBCASE("non-finite feature") {
    g.feature_dim = 1;
    g.features = {0.f, std::numeric_limits<float>::infinity(), 1.f};
    CHECK_THROWS(g.validate());
  }
  SUBCASE("label out of range") {
    g.num_classes = 2;
    g.labels = {0, 1, 2};
    CHECK_THROWS(g.validate());
  }
}

TEST_CASE("bundle save/load round-trips bit-exactly") {
  auto g = fixture_karate();
  g = with_gaussian_features(std::move(g), 7, 3);
  g.num_classes = 2;
  g.labels.assign(g.num_nodes, 0);
  for (NodeId v = 17; v < g.num_nodes; ++v) g.labels[v] = 1;
  g.split.assign(g.num_nodes, 0);
  for (NodeId v = 0; v < g.num_nodes; ++v) g.split[v] = v % 4;

  const auto dir1 = temp_dir("bundle1");
  const auto dir2 = temp_dir("bundle2");
  save_graph(g, dir1.string());
  const auto g2 = load_graph(dir1.string());
  CHECK(g2.indptr == g.indptr);
  CHECK(g2.indices == g.indices);
  CHECK(g2.features == g.features);
  CHECK(g2.labels == g.labels);
  CHECK(g2.split == g.split);

  save_graph(g2, dir2.string());
  for (const char* name : {"indptr.bin", "indices.bin", "feats.bin", "labels.bin", "split.bin"}) {
    std::ifstream a(dir1 / name, std::ios::binary), b(dir2 / name, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
}

TEST_CASE("load_graph errors on missing directory") {
  CHECK_THROWS(load_graph("/nonexistent/bundle"));
}

TEST_CASE("induced subgraph: singleton") {
  const auto g = fixture_eight_node_cubic();
  const auto s = induced_subgraph(g, {5}, 5);
  CHECK(s.num_nodes() == 1);
  CHECK(s.num_edges() == 0);
  CHECK(s.target_global() == 5);
}

TEST_CASE("induced subgraph matches the brute-force edge set") {
  const auto g = fixture_eight_node_cubic();
  SUBCASE("triangle plus pendant around node 0") {
    const auto s = induced_subgraph(g, {0, 1, 7, 4}, 0);
    CHECK(s.num_nodes() == 4);
    CHECK(oracle::subgraph_edges_global(s) ==
          std::vector<std::pair<NodeId, NodeId>>{{0, 1}, {0, 4}, {0, 7}, {1, 7}});
  }
  SUBCASE("star around node 2") {
    const auto s = induced_subgraph(g, {2, 1, 3, 5}, 2);
    CHECK(oracle::subgraph_edges_global(s) ==
          std::vector<std::pair<NodeId, NodeId>>{{1, 2}, {2, 3}, {2, 5}});
  }
  SUBCASE("random node sets on karate") {
    const auto k = fixture_karate();
    Rng rng = make_rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<NodeId> pick(0, k.num_nodes - 1);
      std::vector<NodeId> nodes;
      for (int i = 0; i < 10; ++i) nodes.push_back(pick(rng));
      const NodeId target = nodes[0];
      const auto s = induced_subgraph(k, nodes, target);
      // trimming keeps only target's component; its edges must agree with
      // the brute-force induced set restricted to the kept nodes
      CHECK(oracle::subgraph_edges_global(s) == oracle::induced_edges(k, s.globals));
      const auto dists = bfs_distances(s);  // throws if disconnected
      CHECK(dists[s.target_local] == 0);
    }
  }
}

TEST_CASE("induced subgraph trims to the target component and reports it") {
  const auto g = fixture_two_component_2regular();
  std::uint32_t trimmed = 0;
  const auto s = induced_subgraph(g, {0, 1, 6, 7, 8}, 6, &trimmed);
  CHECK(trimmed == 2);
  CHECK(s.num_nodes() == 3);
  CHECK(s.target_global() == 6);
}

TEST_CASE("induced subgraph errors") {
  const auto g = fixture_triangle();
  CHECK_THROWS(induced_subgraph(g, {0, 1}, 2));
  CHECK_THROWS(induced_subgraph(g, {0, 99}, 0));
  CHECK_THROWS(induced_subgraph(g, {}, 0));
}

TEST_CASE("normalization hand values") {
  const auto g = fixture_triangle();
  SUBCASE("singleton is [[1]] for both kinds") {
    const auto s = induced_subgraph(g, {0}, 0);
    CHECK(normalize(s, NormKind::SYM).dense(0, 0) == doctest::Approx(1.0));
    CHECK(normalize(s, NormKind::RW).dense(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("triangle: every entry 1/3") {
    const auto s = induced_subgraph(g, {0, 1, 2}, 0);
    for (auto kind : {NormKind::SYM, NormKind::RW}) {
      const auto a = normalize(s, kind).dense;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(a(i, j) == doctest::Approx(1.0 / 3));
    }
  }
  SUBCASE("two-node path: sym all 1/2") {
    const auto p = fixture_path(2);
    const auto s = induced_subgraph(p, {0, 1}, 0);
    const auto a = normalize(s, NormKind::SYM).dense;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(a(i, j) == doctest::Approx(0.5));
  }
}

TEST_CASE("normalization invariants on random karate subgraphs") {
  const auto g = fixture_karate();
  Rng rng = make_rng(7);
  std::uniform_int_distribution<NodeId> pick(0, g.num_nodes - 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<NodeId> nodes{pick(rng)};
    for (int i = 0; i < 12; ++i) nodes.push_back(pick(rng));
    const auto s = induced_subgraph(g, nodes, nodes[0]);
    const auto rw = normalize(s, NormKind::RW).dense;
    for (Eigen::Index i = 0; i < rw.rows(); ++i)
      CHECK(std::abs(rw.row(i).sum() - 1.0) <= 1e-9);

    const auto sym = normalize(s, NormKind::SYM).dense;
    CHECK((sym - sym.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    // power iteration: spectral radius 1, eigenvector proportional to sqrt(deg+1)
    Eigen::VectorXd x = Eigen::VectorXd::Ones(sym.rows());
    for (int it = 0; it < 2000; ++it) x = (sym * x).normalized();
    const double rayleigh = x.dot(sym * x);
    CHECK(rayleigh == doctest::Approx(1.0).epsilon(1e-9));
    Eigen::VectorXd expected(sym.rows());
    for (NodeId u = 0; u < s.num_nodes(); ++u) expected[u] = std::sqrt(s.deg_plus_one(u));
    expected.normalize();
    CHECK((x.cwiseAbs() - expected).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("subgraph depth") {
  const auto g = fixture_eight_node_cubic();
  CHECK(subgraph_depth(induced_subgraph(g, {3}, 3)) == 0);
  CHECK(subgraph_depth(induced_subgraph(g, {0, 1, 7, 4}, 0)) == 1);
  const auto p = fixture_path(5);
  std::vector<NodeId> all{0, 1, 2, 3, 4};
  const auto s = induced_subgraph(p, all, 0);
  CHECK(subgraph_depth(s) == 4);
  // BFS oracle agreement on the full fixture
  const auto dist = oracle::bfs(p, 0);
  const auto local = bfs_distances(s);
  for (NodeId u = 0; u < s.num_nodes(); ++u) CHECK(local[u] == dist[s.globals[u]]);
}

TEST_CASE("tsv ingestion") {
  const auto dir = temp_dir("tsv");
  {
    std::ofstream e(dir / "edges.tsv");
    e << "# comment\n0\t1\n1\t2\n";
    std::ofstream f(dir / "feats.tsv");
    f << "1.0\t2.0\n3.0\t4.0\n5.0\t6.0\n";
    std::ofstream l(dir / "labels.tsv");
    l << "0\n1\n0\n";
    std::ofstream s(dir / "split.tsv");
    s << "train\nval\ntest\n";
  }
  NodeId max_id = 0;
  const auto edges = load_edge_tsv((dir / "edges.tsv").string(), &max_id);
  CHECK(edges.size() == 2);
  CHECK(max_id == 2);
  std::uint32_t dim = 0, rows = 0;
  const auto feats = load_feature_tsv((dir / "feats.tsv").string(), &dim, &rows);
  CHECK(dim == 2);
  CHECK(rows == 3);
  CHECK(feats[3] == doctest::Approx(4.0f));
  CHECK(load_label_tsv((dir / "labels.tsv").string()) == std::vector<std::uint32_t>{0, 1, 0});
  CHECK(load_split_tsv((dir / "split.tsv").string()) == std::vector<std::uint8_t>{0, 1, 2});

  std::ofstream bad(dir / "bad.tsv");
  bad << "0\n";
  bad.close();
  CHECK_THROWS(load_edge_tsv((dir / "bad.tsv").string(), nullptr));
}
