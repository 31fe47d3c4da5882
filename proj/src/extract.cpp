#include "gscope/extract.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <queue>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gscope {

void ExtractConfig::validate() const {
  if (members.empty()) throw std::runtime_error("extract config: empty ensemble");
  for (const auto& m : members) {
    if (const auto* kh = std::get_if<KHopConfig>(&m)) {
      if (kh->depth < 1) throw std::runtime_error("extract config: depth must be >= 1");
      if (kh->budget < 1) throw std::runtime_error("extract config: budget must be >= 1");
    } else {
      const auto& p = std::get<PprConfig>(m);
      if (p.top_k < 1) throw std::runtime_error("extract config: top_k must be >= 1");
      if (!(p.alpha > 0.0 && p.alpha < 1.0))
        throw std::runtime_error("extract config: alpha must be in (0,1)");
      if (!(p.epsilon > 0.0)) throw std::runtime_error("extract config: epsilon must be > 0");
      if (p.threshold && p.cap < 1)
        throw std::runtime_error("extract config: cap must be >= 1 with threshold");
    }
  }
}

void PprState::validate(const GraphBundle& g) const {
  double mass = 0.0;
  for (const auto& [u, e] : estimate) {
    if (e < 0.0) throw std::runtime_error("ppr: negative estimate");
    mass += e;
  }
  for (const auto& [u, r] : residual) {
    if (r < 0.0) throw std::runtime_error("ppr: negative residual");
    if (r >= epsilon * (g.degree(u) + 1.0))
      throw std::runtime_error("ppr: residual above termination threshold");
    mass += r;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw std::runtime_error("ppr: mass not conserved");
}

PprState approximate_ppr(const GraphBundle& g, NodeId v, double alpha, double epsilon) {
  PprState st;
  st.seed = v;
  st.alpha = alpha;
  st.epsilon = epsilon;
  st.residual[v] = 1.0;

  auto deg_star = [&](NodeId u) { return g.degree(u) + 1.0; };

  std::deque<NodeId> fifo{v};
  std::unordered_set<NodeId> queued{v};
  while (!fifo.empty()) {
    const NodeId u = fifo.front();
    fifo.pop_front();
    queued.erase(u);
    const double r = st.residual[u];
    const double du = deg_star(u);
    if (r < epsilon * du) continue;
    st.estimate[u] += alpha * r;
    // spread (1-alpha)*r over the self-loop-augmented walk
    const double share = (1.0 - alpha) * r / du;
    st.residual[u] = share;  // self-loop keeps one share
    if (st.residual[u] >= epsilon * du && !queued.count(u)) {
      queued.insert(u);
      fifo.push_back(u);
    }
    for (NodeId w : g.neighbors(u)) {
      auto& rw = st.residual[w];
      rw += share;
      if (rw >= epsilon * deg_star(w) && !queued.count(w)) {
        queued.insert(w);
        fifo.push_back(w);
      }
    }
  }
  st.touched = st.residual.size();
  return st;
}

std::vector<NodeId> select_neighbors(const PprState& p, std::uint32_t top_k,
                                     std::optional<double> threshold, std::uint32_t cap) {
  // every touched node is a candidate; nodes holding only residual mass
  // score zero and rank last
  std::vector<std::pair<double, NodeId>> scored;
  scored.reserve(p.residual.size());
  for (const auto& [u, r] : p.residual)
    scored.emplace_back(p.estimate.count(u) ? p.estimate.at(u) : 0.0, u);
  for (const auto& [u, e] : p.estimate)
    if (!p.residual.count(u)) scored.emplace_back(e, u);
  // descending score, ties by ascending node id
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  std::vector<NodeId> picked;
  if (threshold) {
    for (const auto& [e, u] : scored) {
      if (e <= *threshold || picked.size() >= cap) break;
      picked.push_back(u);
    }
  } else {
    for (const auto& [e, u] : scored) {
      if (picked.size() >= top_k) break;
      picked.push_back(u);
    }
  }
  if (std::find(picked.begin(), picked.end(), p.seed) == picked.end())
    picked.push_back(p.seed);
  std::sort(picked.begin(), picked.end());
  return picked;
}

Subgraph extract_ppr(const GraphBundle& g, NodeId v, const PprConfig& cfg) {
  const PprState st = approximate_ppr(g, v, cfg.alpha, cfg.epsilon);
  st.validate(g);  // mass conservation + termination hold after every extraction
  const auto nodes = select_neighbors(st, cfg.top_k, cfg.threshold, cfg.cap);
  return induced_subgraph(g, nodes, v);
}

Subgraph extract_khop(const GraphBundle& g, NodeId v, std::uint32_t depth,
                      std::uint32_t budget, std::uint64_t seed) {
  std::unordered_set<NodeId> selected{v};
  std::vector<NodeId> frontier{v};
  for (std::uint32_t hop = 0; hop < depth && !frontier.empty(); ++hop) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      auto nb = g.neighbors(u);
      std::vector<NodeId> chosen(nb.begin(), nb.end());
      if (budget != kUnlimitedBudget && chosen.size() > budget) {
        // per-(node, hop) stream: sampling is independent of visit order
        Rng rng = make_rng(mix64(seed, u, hop));
        chosen = sample_without_replacement(std::move(chosen), budget, rng);
      }
      for (NodeId w : chosen) {
        if (selected.insert(w).second) next.push_back(w);
      }
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }
  std::vector<NodeId> nodes(selected.begin(), selected.end());
  return induced_subgraph(g, nodes, v);
}

Subgraph extract_one(const GraphBundle& g, NodeId v, const ExtractVariant& m,
                     std::uint64_t seed) {
  if (v >= g.num_nodes) throw std::runtime_error("extract: target id out of range");
  if (const auto* kh = std::get_if<KHopConfig>(&m))
    return extract_khop(g, v, kh->depth, kh->budget, seed);
  return extract_ppr(g, v, std::get<PprConfig>(m));
}

namespace {

std::vector<Subgraph> batch_for_member(const GraphBundle& g, const std::vector<NodeId>& targets,
                                       const ExtractVariant& m, std::uint64_t member_seed) {
  std::vector<Subgraph> out(targets.size());
  std::string first_error;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(targets.size()); ++i) {
    try {
      out[i] = extract_one(g, targets[i], m, mix64(member_seed, targets[i]));
    } catch (const std::exception& e) {
#pragma omp critical
      if (first_error.empty())
        first_error = "extract failed for target " + std::to_string(targets[i]) + ": " + e.what();
    }
  }
  if (!first_error.empty()) throw std::runtime_error(first_error);
  return out;
}

}  // namespace

std::vector<Subgraph> extract_batch(const GraphBundle& g, const std::vector<NodeId>& targets,
                                    const ExtractConfig& cfg) {
  cfg.validate();
  if (cfg.is_ensemble())
    throw std::runtime_error("extract_batch: ensemble config needs extract_batch_ensemble");
  return batch_for_member(g, targets, cfg.members[0], mix64(cfg.seed, 0));
}

std::vector<std::vector<Subgraph>> extract_batch_ensemble(const GraphBundle& g,
                                                          const std::vector<NodeId>& targets,
                                                          const ExtractConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<Subgraph>> out;
  out.reserve(cfg.members.size());
  for (std::size_t b = 0; b < cfg.members.size(); ++b)
    out.push_back(batch_for_member(g, targets, cfg.members[b], mix64(cfg.seed, b)));
  return out;
}

Subgraph dropedge(const Subgraph& s, double p_drop, Rng& rng) {
  if (p_drop < 0.0 || p_drop > 1.0) throw std::runtime_error("dropedge: p outside [0,1]");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // decide per undirected edge (u < w)
  std::vector<std::vector<NodeId>> kept(s.num_nodes());
  for (NodeId u = 0; u < s.num_nodes(); ++u) {
    for (NodeId w : s.neighbors(u)) {
      if (u < w && unif(rng) >= p_drop) {
        kept[u].push_back(w);
        kept[w].push_back(u);
      }
    }
  }
  // trim to target's component over the kept edges
  std::vector<char> reach(s.num_nodes(), 0);
  std::queue<NodeId> q;
  reach[s.target_local] = 1;
  q.push(s.target_local);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId w : kept[u]) {
      if (!reach[w]) {
        reach[w] = 1;
        q.push(w);
      }
    }
  }
  std::vector<NodeId> remap(s.num_nodes(), 0);
  Subgraph out;
  for (NodeId u = 0; u < s.num_nodes(); ++u) {
    if (reach[u]) {
      remap[u] = static_cast<NodeId>(out.globals.size());
      out.globals.push_back(s.globals[u]);
    }
  }
  out.target_local = remap[s.target_local];
  out.indptr.assign(out.globals.size() + 1, 0);
  std::vector<NodeId> old_ids;
  for (NodeId u = 0; u < s.num_nodes(); ++u)
    if (reach[u]) old_ids.push_back(u);
  for (std::size_t i = 0; i < old_ids.size(); ++i)
    out.indptr[i + 1] = out.indptr[i] + kept[old_ids[i]].size();
  out.indices.resize(out.indptr.back());
  for (std::size_t i = 0; i < old_ids.size(); ++i) {
    auto* dst = out.indices.data() + out.indptr[i];
    for (NodeId w : kept[old_ids[i]]) *dst++ = remap[w];
    std::sort(out.indices.data() + out.indptr[i], out.indices.data() + out.indptr[i + 1]);
  }
  return out;
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x47535343u;  // "GSSC"
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T x;
  f.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!f) throw std::runtime_error("subgraph cache: truncated file");
  return x;
}

}  // namespace

void write_subgraph_cache(const std::string& path, const std::vector<Subgraph>& subgraphs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  put(f, kCacheMagic);
  put(f, kCacheVersion);
  put(f, static_cast<std::uint64_t>(subgraphs.size()));
  for (const auto& s : subgraphs) {
    const std::uint64_t n = s.globals.size();
    const std::uint64_t nnz = s.indices.size();
    const std::uint64_t length = 4 + 4 + 8 + 8 + 4 * n + 8 * (n + 1) + 4 * nnz;
    put(f, length);
    put(f, s.target_global());
    put(f, s.target_local);
    put(f, n);
    put(f, nnz);
    f.write(reinterpret_cast<const char*>(s.globals.data()), static_cast<std::streamsize>(4 * n));
    f.write(reinterpret_cast<const char*>(s.indptr.data()),
            static_cast<std::streamsize>(8 * (n + 1)));
    f.write(reinterpret_cast<const char*>(s.indices.data()),
            static_cast<std::streamsize>(4 * nnz));
  }
}

std::vector<Subgraph> read_subgraph_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing file: " + path);
  if (get<std::uint32_t>(f) != kCacheMagic) throw std::runtime_error("subgraph cache: bad magic");
  if (get<std::uint32_t>(f) != kCacheVersion)
    throw std::runtime_error("subgraph cache: unsupported version");
  const auto count = get<std::uint64_t>(f);
  std::vector<Subgraph> out(count);
  for (auto& s : out) {
    (void)get<std::uint64_t>(f);  // record length
    const auto target_gid = get<NodeId>(f);
    s.target_local = get<NodeId>(f);
    const auto n = get<std::uint64_t>(f);
    const auto nnz = get<std::uint64_t>(f);
    s.globals.resize(n);
    s.indptr.resize(n + 1);
    s.indices.resize(nnz);
    f.read(reinterpret_cast<char*>(s.globals.data()), static_cast<std::streamsize>(4 * n));
    f.read(reinterpret_cast<char*>(s.indptr.data()), static_cast<std::streamsize>(8 * (n + 1)));
    f.read(reinterpret_cast<char*>(s.indices.data()), static_cast<std::streamsize>(4 * nnz));
    if (!f) throw std::runtime_error("subgraph cache: truncated record");
    if (s.target_local >= n || s.globals[s.target_local] != target_gid)
      throw std::runtime_error("subgraph cache: inconsistent target");
  }
  return out;
}

}  // namespace gscope
