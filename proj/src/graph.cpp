#include "gscope/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gscope {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<NodeId> GraphBundle::split_nodes(std::uint8_t which) const {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < num_nodes; ++v) {
    if (!split.empty() && split[v] == which) out.push_back(v);
  }
  return out;
}

void GraphBundle::validate() const {
  if (indptr.size() != static_cast<std::size_t>(num_nodes) + 1)
    throw std::runtime_error("graph: indptr length != num_nodes + 1");
  if (indptr.front() != 0) throw std::runtime_error("graph: indptr[0] != 0");
  if (indptr.back() != indices.size())
    throw std::runtime_error("graph: indptr end != number of stored edges");
  for (NodeId u = 0; u < num_nodes; ++u) {
    if (indptr[u + 1] < indptr[u]) throw std::runtime_error("graph: indptr not non-decreasing");
    NodeId prev = 0;
    bool first = true;
    for (NodeId w : neighbors(u)) {
      if (w >= num_nodes) throw std::runtime_error("graph: neighbor id out of range");
      if (w == u) throw std::runtime_error("graph: explicit self-loop stored");
      if (!first && w <= prev) throw std::runtime_error("graph: row not strictly increasing");
      prev = w;
      first = false;
      // symmetry: (u,w) stored implies (w,u) stored
      auto row = neighbors(w);
      if (!std::binary_search(row.begin(), row.end(), u))
        throw std::runtime_error("graph: adjacency not symmetric");
    }
  }
  if (feature_dim > 0 || !features.empty()) {
    if (features.size() != static_cast<std::size_t>(num_nodes) * feature_dim)
      throw std::runtime_error("graph: feature rows != num_nodes");
    for (float x : features)
      if (!std::isfinite(x)) throw std::runtime_error("graph: non-finite feature value");
  }
  if (!labels.empty()) {
    if (labels.size() != num_nodes) throw std::runtime_error("graph: label rows != num_nodes");
    for (auto y : labels)
      if (y >= num_classes) throw std::runtime_error("graph: label out of class range");
  }
  if (!split.empty()) {
    if (split.size() != num_nodes) throw std::runtime_error("graph: split rows != num_nodes");
    for (auto m : split)
      if (m > 3) throw std::runtime_error("graph: split value out of range");
  }
}

GraphBundle build_graph(std::uint32_t num_nodes,
                        const std::vector<std::pair<NodeId, NodeId>>& edges,
                        std::uint32_t feature_dim, std::vector<float> features,
                        std::uint32_t num_classes, std::vector<std::uint32_t> labels,
                        std::vector<std::uint8_t> split) {
  std::vector<std::pair<NodeId, NodeId>> sym;
  sym.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) throw std::runtime_error("build_graph: id out of range");
    if (u == v) continue;  // raw self-loops stripped; normalization re-adds them
    sym.emplace_back(u, v);
    sym.emplace_back(v, u);
  }
  std::sort(sym.begin(), sym.end());
  sym.erase(std::unique(sym.begin(), sym.end()), sym.end());

  GraphBundle g;
  g.num_nodes = num_nodes;
  g.indptr.assign(num_nodes + 1, 0);
  for (auto& [u, v] : sym) g.indptr[u + 1]++;
  for (NodeId u = 0; u < num_nodes; ++u) g.indptr[u + 1] += g.indptr[u];
  g.indices.resize(sym.size());
  {
    std::vector<std::uint64_t> cursor(g.indptr.begin(), g.indptr.end() - 1);
    for (auto& [u, v] : sym) g.indices[cursor[u]++] = v;
  }
  g.feature_dim = feature_dim;
  g.features = std::move(features);
  g.num_classes = num_classes;
  g.labels = std::move(labels);
  g.split = std::move(split);
  g.validate();
  return g;
}

namespace {

template <typename T>
void write_bin(const fs::path& p, const std::vector<T>& v) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + p.string());
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_bin(const fs::path& p, std::size_t expect_count) {
  std::ifstream f(p, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("missing file: " + p.string());
  const auto bytes = static_cast<std::size_t>(f.tellg());
  if (bytes != expect_count * sizeof(T))
    throw std::runtime_error("unexpected size of " + p.string());
  f.seekg(0);
  std::vector<T> v(expect_count);
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  return v;
}

}  // namespace

void save_graph(const GraphBundle& g, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path base(dir);
  json meta = {
      {"num_nodes", g.num_nodes},
      {"num_edges", g.num_edges()},
      {"feature_dim", g.feature_dim},
      {"num_classes", g.num_classes},
      {"has_labels", g.has_labels()},
      {"has_split", g.has_split()},
  };
  std::ofstream mf(base / "meta.json");
  mf << meta.dump(2) << "\n";
  write_bin(base / "indptr.bin", g.indptr);
  write_bin(base / "indices.bin", g.indices);
  write_bin(base / "feats.bin", g.features);
  if (g.has_labels()) write_bin(base / "labels.bin", g.labels);
  if (g.has_split()) write_bin(base / "split.bin", g.split);
}

GraphBundle load_graph(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream mf(base / "meta.json");
  if (!mf) throw std::runtime_error("missing file: " + (base / "meta.json").string());
  json meta = json::parse(mf);

  GraphBundle g;
  g.num_nodes = meta.at("num_nodes").get<std::uint32_t>();
  g.feature_dim = meta.at("feature_dim").get<std::uint32_t>();
  g.num_classes = meta.at("num_classes").get<std::uint32_t>();
  const auto num_edges = meta.at("num_edges").get<std::uint64_t>();

  g.indptr = read_bin<std::uint64_t>(base / "indptr.bin", g.num_nodes + 1);
  g.indices = read_bin<NodeId>(base / "indices.bin", num_edges * 2);
  g.features = read_bin<float>(base / "feats.bin",
                               static_cast<std::size_t>(g.num_nodes) * g.feature_dim);
  if (meta.value("has_labels", false))
    g.labels = read_bin<std::uint32_t>(base / "labels.bin", g.num_nodes);
  if (meta.value("has_split", false))
    g.split = read_bin<std::uint8_t>(base / "split.bin", g.num_nodes);
  g.validate();
  return g;
}

namespace {

std::vector<std::string> tsv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

bool skippable(const std::string& line) {
  return line.empty() || line[0] == '#' || line == "\r";
}

}  // namespace

std::vector<std::pair<NodeId, NodeId>> load_edge_tsv(const std::string& path,
                                                     NodeId* max_id_seen) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing file: " + path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  NodeId max_id = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    lineno++;
    if (skippable(line)) continue;
    const auto fields = tsv_fields(line);
    if (fields.size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed edge row");
    try {
      const auto u = static_cast<NodeId>(std::stoul(fields[0]));
      const auto v = static_cast<NodeId>(std::stoul(fields[1]));
      edges.emplace_back(u, v);
      max_id = std::max({max_id, u, v});
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed edge row");
    }
  }
  if (max_id_seen) *max_id_seen = edges.empty() ? 0 : max_id;
  return edges;
}

std::vector<float> load_feature_tsv(const std::string& path, std::uint32_t* dim,
                                    std::uint32_t* rows) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing file: " + path);
  std::vector<float> feats;
  std::uint32_t d = 0, n = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    lineno++;
    if (skippable(line)) continue;
    const auto fields = tsv_fields(line);
    if (d == 0) d = static_cast<std::uint32_t>(fields.size());
    if (fields.size() != d)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": ragged feature row");
    for (const auto& s : fields) feats.push_back(std::stof(s));
    n++;
  }
  *dim = d;
  *rows = n;
  return feats;
}

std::vector<std::uint32_t> load_label_tsv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing file: " + path);
  std::vector<std::uint32_t> labels;
  std::string line;
  while (std::getline(f, line)) {
    if (skippable(line)) continue;
    labels.push_back(static_cast<std::uint32_t>(std::stoul(line)));
  }
  return labels;
}

std::vector<std::uint8_t> load_split_tsv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing file: " + path);
  std::vector<std::uint8_t> split;
  std::string line;
  while (std::getline(f, line)) {
    if (skippable(line)) continue;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == "train" || line == "0")
      split.push_back(0);
    else if (line == "val" || line == "1")
      split.push_back(1);
    else if (line == "test" || line == "2")
      split.push_back(2);
    else if (line == "none" || line == "3")
      split.push_back(3);
    else
      throw std::runtime_error(path + ": bad split value '" + line + "'");
  }
  return split;
}

Subgraph induced_subgraph(const GraphBundle& g, const std::vector<NodeId>& node_set,
                          NodeId target, std::uint32_t* num_trimmed) {
  if (node_set.empty()) throw std::runtime_error("induced_subgraph: empty node set");
  std::vector<NodeId> nodes(node_set);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (NodeId v : nodes)
    if (v >= g.num_nodes) throw std::runtime_error("induced_subgraph: node id out of range");
  if (!std::binary_search(nodes.begin(), nodes.end(), target))
    throw std::runtime_error("induced_subgraph: target not in node set");

  // BFS from target over edges internal to the set; keeps only target's
  // component so the extractor contract (connected scope) always holds.
  auto local_of = [&](NodeId global) -> std::int64_t {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), global);
    if (it == nodes.end() || *it != global) return -1;
    return it - nodes.begin();
  };
  const auto target_idx = local_of(target);
  if (target_idx < 0) throw std::runtime_error("induced_subgraph: target not in node set");
  std::vector<char> reached(nodes.size(), 0);
  std::queue<std::size_t> q;
  reached[static_cast<std::size_t>(target_idx)] = 1;
  q.push(static_cast<std::size_t>(target_idx));
  while (!q.empty()) {
    const auto i = q.front();
    q.pop();
    for (NodeId w : g.neighbors(nodes[i])) {
      const auto j = local_of(w);
      if (j >= 0 && !reached[j]) {
        reached[j] = 1;
        q.push(static_cast<std::size_t>(j));
      }
    }
  }

  Subgraph s;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (reached[i]) s.globals.push_back(nodes[i]);
  if (num_trimmed) *num_trimmed = static_cast<std::uint32_t>(nodes.size() - s.globals.size());

  auto kept_local = [&](NodeId global) -> std::int64_t {
    auto it = std::lower_bound(s.globals.begin(), s.globals.end(), global);
    if (it == s.globals.end() || *it != global) return -1;
    return it - s.globals.begin();
  };
  s.target_local = static_cast<NodeId>(kept_local(target));
  s.indptr.assign(s.globals.size() + 1, 0);
  for (std::size_t i = 0; i < s.globals.size(); ++i) {
    for (NodeId w : g.neighbors(s.globals[i]))
      if (kept_local(w) >= 0) s.indptr[i + 1]++;
  }
  for (std::size_t i = 0; i < s.globals.size(); ++i) s.indptr[i + 1] += s.indptr[i];
  s.indices.resize(s.indptr.back());
  {
    std::vector<std::uint64_t> cursor(s.indptr.begin(), s.indptr.end() - 1);
    for (std::size_t i = 0; i < s.globals.size(); ++i) {
      for (NodeId w : g.neighbors(s.globals[i])) {
        const auto j = kept_local(w);
        if (j >= 0) s.indices[cursor[i]++] = static_cast<NodeId>(j);
      }
    }
  }
  return s;
}

NormAdj normalize(const Subgraph& s, NormKind kind) {
  return NormAdj{kind, norm_adj_dense<double>(s, kind)};
}

std::vector<std::uint32_t> bfs_distances(const Subgraph& s) {
  constexpr std::uint32_t kUnreached = 0xffffffffu;
  std::vector<std::uint32_t> dist(s.num_nodes(), kUnreached);
  std::queue<NodeId> q;
  dist[s.target_local] = 0;
  q.push(s.target_local);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId w : s.neighbors(u)) {
      if (dist[w] == kUnreached) {
        dist[w] = dist[u] + 1;
        q.push(w);
      }
    }
  }
  for (auto d : dist)
    if (d == kUnreached) throw std::runtime_error("subgraph not connected from target");
  return dist;
}

std::uint32_t subgraph_depth(const Subgraph& s) {
  const auto dist = bfs_distances(s);
  return *std::max_element(dist.begin(), dist.end());
}

Eigen::MatrixXd subgraph_features(const GraphBundle& g, const Subgraph& s) {
  Eigen::MatrixXd x(s.num_nodes(), g.feature_dim);
  for (NodeId i = 0; i < s.num_nodes(); ++i) {
    auto row = g.feature_row(s.globals[i]);
    for (std::uint32_t j = 0; j < g.feature_dim; ++j) x(i, j) = row[j];
  }
  return x;
}

}  // namespace gscope
