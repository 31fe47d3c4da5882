#include "gscope/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gscope/model.hpp"

namespace gscope {

StationaryProfile limit_aggregation(const Subgraph& s, const Eigen::MatrixXd& x) {
  const auto n = static_cast<Eigen::Index>(s.num_nodes());
  StationaryProfile p;
  p.e_vec.resize(n);
  double total = 0.0;
  for (NodeId u = 0; u < s.num_nodes(); ++u) total += s.deg_plus_one(u);
  for (NodeId u = 0; u < s.num_nodes(); ++u)
    p.e_vec[u] = std::sqrt(s.deg_plus_one(u) / total);
  p.delta_hat.resize(n);
  for (NodeId u = 0; u < s.num_nodes(); ++u) p.delta_hat[u] = s.deg_plus_one(u) / total;
  p.limit_m = p.e_vec[s.target_local] * (p.e_vec.transpose() * x).transpose();

  const Eigen::MatrixXd adj = norm_adj_dense<double>(s, NormKind::SYM);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(adj);
  std::vector<double> mags(es.eigenvalues().data(), es.eigenvalues().data() + n);
  for (auto& m : mags) m = std::abs(m);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  p.lambda2_abs = n > 1 ? mags[1] : 0.0;
  return p;
}

Eigen::VectorXd power_limit(const Subgraph& s, const Eigen::MatrixXd& x, int depth) {
  if (depth < 0) throw std::runtime_error("power_limit: depth must be >= 0");
  const Eigen::MatrixXd adj = norm_adj_dense<double>(s, NormKind::SYM);
  Eigen::MatrixXd f = x;
  for (int i = 0; i < depth; ++i) f = adj * f;
  return f.row(s.target_local).transpose();
}

Eigen::VectorXd target_function(const Subgraph& s, const Eigen::MatrixXd& x) {
  double total = 0.0;
  for (NodeId u = 0; u < s.num_nodes(); ++u) total += s.deg_plus_one(u);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.cols());
  for (NodeId u = 0; u < s.num_nodes(); ++u)
    out += (s.deg_plus_one(u) / total) * x.row(u).transpose();
  return out;
}

double markov_error(const Subgraph& s, int depth) {
  if (depth < 0) throw std::runtime_error("markov_error: depth must be >= 0");
  const auto n = static_cast<Eigen::Index>(s.num_nodes());
  const Eigen::MatrixXd adj = norm_adj_dense<double>(s, NormKind::RW);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
  row[s.target_local] = 1.0;
  for (int i = 0; i < depth; ++i) row = row * adj;
  double total = 0.0;
  for (NodeId u = 0; u < s.num_nodes(); ++u) total += s.deg_plus_one(u);
  double err = 0.0;
  for (NodeId u = 0; u < s.num_nodes(); ++u)
    err += std::abs(row[u] - s.deg_plus_one(u) / total);
  return err;
}

DistinctnessReport scope_distinctness(const GraphBundle& g, const ExtractConfig& cfg,
                                      std::uint64_t feature_seed, PhiMode mode,
                                      std::uint32_t feature_dim) {
  cfg.validate();
  if (cfg.is_ensemble())
    throw std::runtime_error("scope_distinctness: single extractor expected");
  std::vector<NodeId> targets(g.num_nodes);
  std::iota(targets.begin(), targets.end(), 0);
  return scope_distinctness(g, extract_batch(g, targets, cfg), feature_seed, mode,
                            feature_dim);
}

DistinctnessReport scope_distinctness(const GraphBundle& g, const std::vector<Subgraph>& subs,
                                      std::uint64_t feature_seed, PhiMode mode,
                                      std::uint32_t feature_dim) {
  if (g.num_nodes > 5000) throw std::runtime_error("scope_distinctness: graph too large");

  Rng rng = make_rng(mix64(feature_seed, 0xd15c));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(g.num_nodes, feature_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = gauss(rng);

  std::vector<Eigen::VectorXd> aggs(subs.size());
  std::vector<std::vector<NodeId>> scopes(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const auto& s = subs[i];
    // closed-form limit: no eigensolve needed here
    double total = 0.0;
    for (NodeId u = 0; u < s.num_nodes(); ++u) total += s.deg_plus_one(u);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(feature_dim);
    for (NodeId u = 0; u < s.num_nodes(); ++u)
      m += std::sqrt(s.deg_plus_one(u) / total) * x.row(s.globals[u]).transpose();
    m *= std::sqrt(s.deg_plus_one(s.target_local) / total);
    double phi = 1.0;
    if (mode == PhiMode::INV_SQRT_DEG)
      phi = 1.0 / std::sqrt(static_cast<double>(s.deg_plus_one(s.target_local)));
    aggs[i] = phi * m;
    scopes[i] = s.globals;  // already sorted
  }

  DistinctnessReport rep;
  rep.num_targets = subs.size();
  constexpr double kTol = 1e-9;
  std::vector<char> agg_dup(subs.size(), 0);
  for (std::size_t i = 0; i < subs.size(); ++i) {
    for (std::size_t j = i + 1; j < subs.size(); ++j) {
      const bool close = (aggs[i] - aggs[j]).norm() <= kTol;
      if (close) {
        agg_dup[j] = 1;
        if (scopes[i] != scopes[j]) rep.collisions++;
      }
    }
  }
  rep.distinct_aggregations =
      static_cast<std::size_t>(std::count(agg_dup.begin(), agg_dup.end(), 0));
  std::vector<std::vector<NodeId>> uniq = scopes;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  rep.distinct_scopes = uniq.size();
  return rep;
}

// ---------------------------------------------------------------------------
// color refinement

namespace {

std::vector<std::uint32_t> canonical_colors(const std::vector<std::uint32_t>& colors) {
  std::map<std::uint32_t, std::uint32_t> remap;
  std::vector<std::uint32_t> out(colors.size());
  for (std::size_t i = 0; i < colors.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(colors[i], static_cast<std::uint32_t>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

std::size_t num_classes_of(const std::vector<std::uint32_t>& colors) {
  std::vector<std::uint32_t> c = colors;
  std::sort(c.begin(), c.end());
  return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
}

}  // namespace

WlColoring wl_refine(const CsrView& g, const std::vector<std::uint32_t>& init_colors,
                     std::uint32_t max_rounds, WlDict* shared) {
  if (init_colors.size() != g.num_nodes)
    throw std::runtime_error("wl_refine: init color count mismatch");
  WlDict local;
  WlDict& dict = shared ? *shared : local;

  WlColoring wl;
  wl.colors = shared ? init_colors : canonical_colors(init_colors);
  for (std::uint32_t round = 1; round <= max_rounds; ++round) {
    std::vector<std::uint32_t> next(g.num_nodes);
    for (NodeId v = 0; v < g.num_nodes; ++v) {
      std::vector<std::uint32_t> multiset;
      for (auto e = g.indptr[v]; e < g.indptr[v + 1]; ++e)
        multiset.push_back(wl.colors[g.indices[e]]);
      std::sort(multiset.begin(), multiset.end());
      auto [it, inserted] = dict.try_emplace({wl.colors[v], std::move(multiset)},
                                             static_cast<std::uint32_t>(dict.size()));
      next[v] = it->second;
    }
    const bool refined = num_classes_of(next) != num_classes_of(wl.colors);
    if (refined) wl.rounds = round;
    if (!shared && !refined) break;  // stable partition, old ids already canonical
    // shared-dictionary runs keep going so color ids of different (sub)graphs
    // always correspond to the same unfolding depth
    wl.colors = shared ? next : canonical_colors(next);
  }
  return wl;
}

WlColoring wl_refine(const GraphBundle& g, const std::vector<std::uint32_t>& init_colors,
                     std::uint32_t max_rounds) {
  return wl_refine(csr_view(g), init_colors, max_rounds);
}

std::vector<LocalWlLabel> localized_wl(const GraphBundle& g, const ExtractConfig& cfg,
                                        std::uint32_t rounds) {
  cfg.validate();
  if (cfg.is_ensemble()) throw std::runtime_error("localized_wl: single extractor expected");
  std::vector<NodeId> targets(g.num_nodes);
  std::iota(targets.begin(), targets.end(), 0);
  const auto subs = extract_batch(g, targets, cfg);

  WlDict dict;  // shared so colors mean the same unfolding across subgraphs
  std::vector<LocalWlLabel> labels(g.num_nodes);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    const auto& s = subs[v];
    const auto wl =
        wl_refine(csr_view(s), std::vector<std::uint32_t>(s.num_nodes(), 0), rounds, &dict);
    LocalWlLabel lab;
    lab.target_color = wl.colors[s.target_local];
    std::map<std::uint32_t, std::uint32_t> hist;
    for (auto c : wl.colors) hist[c]++;
    lab.histogram.assign(hist.begin(), hist.end());
    labels[v] = std::move(lab);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// propagation sweeps

Eigen::MatrixXd features_as_matrix(const GraphBundle& g) {
  Eigen::MatrixXd x(g.num_nodes, g.feature_dim);
  for (NodeId v = 0; v < g.num_nodes; ++v) {
    auto row = g.feature_row(v);
    for (std::uint32_t j = 0; j < g.feature_dim; ++j) x(v, j) = row[j];
  }
  return x;
}

Eigen::MatrixXd full_graph_propagate(const GraphBundle& g, const Eigen::MatrixXd& x, int k) {
  if (k < 0) throw std::runtime_error("full_graph_propagate: k must be >= 0");
  std::vector<double> inv_sqrt_deg(g.num_nodes);
  for (NodeId v = 0; v < g.num_nodes; ++v) inv_sqrt_deg[v] = 1.0 / std::sqrt(g.degree(v) + 1.0);
  Eigen::MatrixXd f = x;
  Eigen::MatrixXd next(f.rows(), f.cols());
  for (int step = 0; step < k; ++step) {
    for (NodeId v = 0; v < g.num_nodes; ++v) {
      Eigen::RowVectorXd acc = f.row(v) * inv_sqrt_deg[v];
      for (NodeId u : g.neighbors(v)) acc += f.row(u) * inv_sqrt_deg[u];
      next.row(v) = acc * inv_sqrt_deg[v];
    }
    f.swap(next);
  }
  return f;
}

Eigen::MatrixXd subgraph_propagated_rows(const GraphBundle& g,
                                         const std::vector<Subgraph>& subs, int k) {
  Eigen::MatrixXd rows(subs.size(), g.feature_dim);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(subs.size()); ++i)
    rows.row(i) = power_limit(subs[i], subgraph_features(g, subs[i]), k).transpose();
  return rows;
}

std::vector<SgcSweepRow> sgc_sweep(const GraphBundle& g, const ExtractConfig& cfg,
                                   const std::vector<int>& powers) {
  if (!g.has_labels() || !g.has_split()) throw std::runtime_error("sgc_sweep: labels/split required");
  const auto train_idx = g.split_nodes(0);
  const auto test_idx = g.split_nodes(2);
  const Eigen::MatrixXd x = features_as_matrix(g);

  std::vector<NodeId> all_nodes(g.num_nodes);
  std::iota(all_nodes.begin(), all_nodes.end(), 0);
  const auto subs = extract_batch(g, all_nodes, cfg);

  std::vector<SgcSweepRow> table;
  for (int k : powers) {
    SgcSweepRow row;
    row.power = k;
    {
      const Eigen::MatrixXd feats = full_graph_propagate(g, x, k);
      const auto w = train_softmax_regression(feats, g.labels, train_idx, g.num_classes);
      row.full_acc = softmax_regression_accuracy(feats, w, g.labels, test_idx);
    }
    {
      const Eigen::MatrixXd feats = subgraph_propagated_rows(g, subs, k);
      const auto w = train_softmax_regression(feats, g.labels, train_idx, g.num_classes);
      row.local_acc = softmax_regression_accuracy(feats, w, g.labels, test_idx);
    }
    table.push_back(row);
  }
  return table;
}

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::runtime_error("fit_line: bad input");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

}  // namespace gscope
