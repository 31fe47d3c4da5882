#pragma once

// Template implementation detail of model.hpp. Everything here is scalar
// generic: training runs in f32, gradient checking and theory paths in f64.

#include <algorithm>
#include <numeric>

namespace gscope {

inline void ModelConfig::validate() const {
  if (num_layers < 1) throw std::runtime_error("model config: num_layers must be >= 1");
  if (hidden_dim < 1) throw std::runtime_error("model config: hidden_dim must be >= 1");
  if (arch == Arch::GAT && (num_heads < 1 || hidden_dim % num_heads != 0))
    throw std::runtime_error("model config: heads must divide hidden_dim");
  if (dropout < 0.0 || dropout > 1.0 || dropedge < 0.0 || dropedge > 1.0)
    throw std::runtime_error("model config: dropout/dropedge outside [0,1]");
  if (ensemble_branches < 1) throw std::runtime_error("model config: need >= 1 branch");
  if (pooling == Pooling::SORT && sort_k < 1)
    throw std::runtime_error("model config: sort_k must be >= 1");
  if (input_dim < 1 || num_classes < 1)
    throw std::runtime_error("model config: input_dim / num_classes unset");
}

// ---------------------------------------------------------------------------
// parameter bookkeeping

namespace detail {

template <typename S, typename Fn>
void visit_mlp(MlpT<S>& m, Fn&& fn) {
  for (auto& w : m.w) fn(w);
  for (auto& b : m.b) fn(b);
  for (auto& p : m.prelu) fn(p);
}

template <typename S, typename Fn>
void visit_params(ParamSetT<S>& p, Fn&& fn) {
  for (auto& br : p.branches) {
    for (auto& l : br.layers) {
      if (l.w.size()) fn(l.w);
      if (l.w2.size()) fn(l.w2);
      if (l.bias.size()) fn(l.bias);
      if (l.prelu.size()) fn(l.prelu);
      for (auto& hw : l.head_w) fn(hw);
      for (auto& a : l.attn) fn(a);
      visit_mlp(l.mlp_msg, fn);
      visit_mlp(l.mlp_upd, fn);
    }
    visit_mlp(br.head, fn);
    visit_mlp(br.sort_mlp, fn);
  }
  visit_mlp(p.ens_attn, fn);
  if (p.ens_q.size()) fn(p.ens_q);
}

}  // namespace detail

template <typename S>
std::vector<Mat<S>*> ParamSetT<S>::collect() {
  std::vector<Mat<S>*> out;
  detail::visit_params(*this, [&](Mat<S>& m) { out.push_back(&m); });
  return out;
}

template <typename S>
std::vector<const Mat<S>*> ParamSetT<S>::collect() const {
  std::vector<const Mat<S>*> out;
  detail::visit_params(const_cast<ParamSetT<S>&>(*this),
                       [&](Mat<S>& m) { out.push_back(&m); });
  return out;
}

template <typename S>
ParamSetT<S> zero_like(const ParamSetT<S>& p) {
  ParamSetT<S> z = p;
  for (auto* m : z.collect()) m->setZero();
  return z;
}

namespace detail {

template <typename S>
Mat<S> glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(unif(rng));
  return m;
}

template <typename S>
MlpT<S> make_mlp(const std::vector<int>& dims, Act act, Rng& rng) {
  MlpT<S> m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.w.push_back(glorot<S>(dims[i], dims[i + 1], rng));
    m.b.push_back(Mat<S>::Zero(1, dims[i + 1]));
  }
  if (act == Act::PRELU) {
    for (std::size_t i = 0; i + 2 < dims.size(); ++i)
      m.prelu.push_back(Mat<S>::Constant(1, 1, S(0.25)));
  }
  return m;
}

}  // namespace detail

template <typename S>
ParamSetT<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(mix64(seed, 0x1417));
  ParamSetT<S> p;
  p.branches.resize(cfg.ensemble_branches);
  for (auto& br : p.branches) {
    br.layers.resize(cfg.arch == Arch::SGC ? 1 : cfg.num_layers);
    if (cfg.arch == Arch::SGC) {
      br.layers[0].w = detail::glorot<S>(cfg.input_dim, cfg.num_classes, rng);
      continue;
    }
    for (int l = 0; l < cfg.num_layers; ++l) {
      auto& lp = br.layers[l];
      const int din = (l == 0) ? cfg.input_dim : cfg.hidden_dim;
      const int dout = cfg.hidden_dim;
      switch (cfg.arch) {
        case Arch::GCN:
          lp.w = detail::glorot<S>(din, dout, rng);
          lp.bias = Mat<S>::Zero(1, dout);
          break;
        case Arch::SAGE:
          lp.w = detail::glorot<S>(din, dout, rng);
          lp.w2 = detail::glorot<S>(din, dout, rng);
          lp.bias = Mat<S>::Zero(1, dout);
          break;
        case Arch::GAT: {
          const int dh = dout / cfg.num_heads;
          for (int h = 0; h < cfg.num_heads; ++h) {
            lp.head_w.push_back(detail::glorot<S>(din, dh, rng));
            lp.attn.push_back(detail::glorot<S>(2 * dh, 1, rng));
          }
          lp.bias = Mat<S>::Zero(1, dout);
          break;
        }
        case Arch::GIN:
          lp.mlp_msg = detail::make_mlp<S>({2 * din, cfg.hidden_dim, cfg.hidden_dim},
                                           cfg.activation, rng);
          lp.mlp_upd = detail::make_mlp<S>({din + cfg.hidden_dim, cfg.hidden_dim, dout},
                                           cfg.activation, rng);
          break;
        case Arch::SGC: break;
      }
      if (cfg.activation == Act::PRELU && cfg.arch != Arch::GIN)
        lp.prelu = Mat<S>::Constant(1, 1, S(0.25));
    }
    const int d = cfg.embed_dim();
    br.head = detail::make_mlp<S>({2 * d, cfg.hidden_dim, cfg.num_classes}, cfg.activation, rng);
    if (cfg.pooling == Pooling::SORT)
      br.sort_mlp = detail::make_mlp<S>({cfg.sort_k * d, d}, cfg.activation, rng);
  }
  if (cfg.ensemble_branches > 1) {
    p.ens_attn =
        detail::make_mlp<S>({cfg.num_classes, cfg.num_classes}, cfg.activation, rng);
    p.ens_q = detail::glorot<S>(cfg.num_classes, 1, rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// layers

namespace detail {

template <typename S>
Mat<S> apply_act(const Mat<S>& pre, Act act, const Mat<S>& prelu) {
  const S slope = (act == Act::PRELU) ? prelu(0, 0) : S(0);
  return pre.unaryExpr([&](S v) { return act_f(act, v, slope); });
}

template <typename S>
Mat<S> act_backward(const Mat<S>& pre, Act act, const Mat<S>& prelu, const Mat<S>& dout,
                    Mat<S>* dprelu) {
  const S slope = (act == Act::PRELU) ? prelu(0, 0) : S(0);
  Mat<S> dpre = dout.cwiseProduct(pre.unaryExpr([&](S v) { return act_df(act, v, slope); }));
  if (act == Act::PRELU && dprelu) {
    S ds = 0;
    for (Eigen::Index i = 0; i < pre.rows(); ++i)
      for (Eigen::Index j = 0; j < pre.cols(); ++j)
        if (pre(i, j) <= S(0)) ds += pre(i, j) * dout(i, j);
    (*dprelu)(0, 0) += ds;
  }
  return dpre;
}

}  // namespace detail

template <typename S>
Mat<S> gcn_layer(const Mat<S>& h, const Mat<S>& adj_sym, const LayerParamsT<S>& p, Act act,
                 LayerTape<S>* tape) {
  if (h.cols() != p.w.rows()) throw std::runtime_error("gcn_layer: shape mismatch");
  Mat<S> agg = adj_sym * h;
  Mat<S> pre = (agg * p.w).rowwise() + p.bias.row(0);
  Mat<S> out = detail::apply_act(pre, act, p.prelu);
  if (tape) {
    tape->x = h;
    tape->agg = std::move(agg);
    tape->pre = std::move(pre);
  }
  return out;
}

template <typename S>
Mat<S> sage_layer(const Mat<S>& h, const Mat<S>& adj_rw, const LayerParamsT<S>& p, Act act,
                  LayerTape<S>* tape) {
  if (h.cols() != p.w.rows() || h.cols() != p.w2.rows())
    throw std::runtime_error("sage_layer: shape mismatch");
  Mat<S> agg = adj_rw * h;
  Mat<S> pre = (h * p.w + agg * p.w2).rowwise() + p.bias.row(0);
  Mat<S> out = detail::apply_act(pre, act, p.prelu);
  if (tape) {
    tape->x = h;
    tape->agg = std::move(agg);
    tape->pre = std::move(pre);
  }
  return out;
}

template <typename S>
Mat<S> gin_layer(const Mat<S>& h, const Subgraph& s, const LayerParamsT<S>& p, Act mlp_act,
                 LayerTape<S>* tape) {
  const auto n = static_cast<Eigen::Index>(s.num_nodes());
  if (h.rows() != n) throw std::runtime_error("gin_layer: row count != subgraph size");
  const auto num_edges = static_cast<Eigen::Index>(s.indices.size());
  const Eigen::Index din = h.cols();
  const Eigen::Index dmsg = p.mlp_msg.out_dim();

  // edge e = (dst v, src u) in CSR order; message input is [h_v || h_u]
  Mat<S> msg_in(num_edges, 2 * din);
  for (NodeId v = 0; v < s.num_nodes(); ++v) {
    for (auto e = s.indptr[v]; e < s.indptr[v + 1]; ++e) {
      const NodeId u = s.indices[e];
      msg_in.row(static_cast<Eigen::Index>(e)) << h.row(v), h.row(u);
    }
  }
  MlpTape<S> msg_tape;
  Mat<S> msg_out =
      mlp_forward(p.mlp_msg, msg_in, mlp_act, tape ? &msg_tape : nullptr);

  Mat<S> summed = Mat<S>::Zero(n, dmsg);  // empty neighborhoods keep the zero row
  for (NodeId v = 0; v < s.num_nodes(); ++v)
    for (auto e = s.indptr[v]; e < s.indptr[v + 1]; ++e)
      summed.row(v) += msg_out.row(static_cast<Eigen::Index>(e));

  Mat<S> upd_in(n, din + dmsg);
  upd_in << h, summed;
  MlpTape<S> upd_tape;
  Mat<S> out = mlp_forward(p.mlp_upd, upd_in, mlp_act, tape ? &upd_tape : nullptr);
  if (tape) {
    tape->x = h;
    tape->gin_msg = std::move(msg_tape);
    tape->gin_upd = std::move(upd_tape);
  }
  return out;
}

template <typename S>
Mat<S> gat_layer(const Mat<S>& h, const Subgraph& s, const LayerParamsT<S>& p, Act act) {
  const auto n = static_cast<Eigen::Index>(s.num_nodes());
  const int t = static_cast<int>(p.head_w.size());
  const Eigen::Index dh = p.head_w[0].cols();
  if (h.cols() != p.head_w[0].rows()) throw std::runtime_error("gat_layer: shape mismatch");
  auto leaky = [](S x) { return x > S(0) ? x : S(0.2) * x; };

  Mat<S> out(n, t * dh);
  for (int head = 0; head < t; ++head) {
    const Mat<S> trans = h * p.head_w[head];
    const auto& a = p.attn[head];
    // per-node score halves: logit(u -> v) = leaky(a_src . T_u + a_dst . T_v)
    Vec<S> src_score = trans * a.topRows(dh);
    Vec<S> dst_score = trans * a.bottomRows(dh);
    for (NodeId v = 0; v < s.num_nodes(); ++v) {
      std::vector<NodeId> in_nodes{v};  // self-loop
      for (NodeId u : s.neighbors(v)) in_nodes.push_back(u);
      S max_logit = -std::numeric_limits<S>::infinity();
      std::vector<S> logits(in_nodes.size());
      for (std::size_t i = 0; i < in_nodes.size(); ++i) {
        logits[i] = leaky(src_score[in_nodes[i]] + dst_score[v]);
        max_logit = std::max(max_logit, logits[i]);
      }
      S denom = 0;
      for (auto& l : logits) {
        l = std::exp(l - max_logit);
        denom += l;
      }
      Vec<S> acc = Vec<S>::Zero(dh);
      for (std::size_t i = 0; i < in_nodes.size(); ++i)
        acc += (logits[i] / denom) * trans.row(in_nodes[i]).transpose();
      out.block(v, head * dh, 1, dh) = acc.transpose();
    }
  }
  out = (out.rowwise() + p.bias.row(0)).eval();
  return detail::apply_act(out, act, p.prelu);
}

inline Eigen::VectorXd sgc_forward(const Subgraph& s, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& w, int k) {
  if (k < 0) throw std::runtime_error("sgc_forward: k must be >= 0");
  const Eigen::MatrixXd adj = norm_adj_dense<double>(s, NormKind::SYM);
  Eigen::MatrixXd f = x;
  for (int i = 0; i < k; ++i) f = adj * f;
  Eigen::VectorXd logits = (f.row(s.target_local) * w).transpose();
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// readout / head / ensemble

template <typename S>
Vec<S> readout(const Mat<S>& z, NodeId target_local, Pooling kind,
               const BranchParamsT<S>& bp, Act act, int sort_k, ReadoutTape<S>* tape) {
  const Eigen::Index n = z.rows(), d = z.cols();
  switch (kind) {
    case Pooling::CENTER:
      return z.row(target_local).transpose();
    case Pooling::SUM:
      return z.colwise().sum().transpose();
    case Pooling::MEAN:
      return z.colwise().sum().transpose() / static_cast<S>(n);
    case Pooling::MAX: {
      Vec<S> out(d);
      if (tape) tape->max_arg.assign(d, 0);
      for (Eigen::Index c = 0; c < d; ++c) {
        Eigen::Index arg = 0;
        out[c] = z.col(c).maxCoeff(&arg);
        if (tape) tape->max_arg[c] = arg;
      }
      return out;
    }
    case Pooling::SORT: {
      // rows ordered by last column descending (missing rows rank below any
      // real row, and enter the perceptron as zeros)
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) {
                         return z(a, d - 1) > z(b, d - 1);
                       });
      Mat<S> flat = Mat<S>::Zero(1, sort_k * d);
      std::vector<Eigen::Index> rows(sort_k, -1);
      for (int j = 0; j < sort_k && j < n; ++j) {
        rows[j] = order[j];
        flat.block(0, j * d, 1, d) = z.row(order[j]);
      }
      MlpTape<S> mt;
      Mat<S> pooled = mlp_forward(bp.sort_mlp, flat, act, tape ? &mt : nullptr);
      if (tape) {
        tape->sort_rows = std::move(rows);
        tape->sort_tape = std::move(mt);
      }
      return pooled.row(0).transpose();
    }
  }
  throw std::runtime_error("readout: unknown pooling");
}

template <typename S>
Vec<S> head_apply(const Vec<S>& pooled, const Vec<S>& target_row, const MlpT<S>& head_mlp,
                  Act act, MlpTape<S>* tape) {
  if (pooled.size() + target_row.size() != head_mlp.w[0].rows())
    throw std::runtime_error("head: shape mismatch");
  Mat<S> in(1, pooled.size() + target_row.size());
  in << pooled.transpose(), target_row.transpose();
  return mlp_forward(head_mlp, in, act, tape).row(0).transpose();
}

template <typename S>
Vec<S> ensemble_combine(const std::vector<Vec<S>>& ys, const MlpT<S>& attn_mlp,
                        const Mat<S>& q, Act act, EnsembleTape<S>* tape) {
  if (ys.empty()) throw std::runtime_error("ensemble: empty branch list");
  const auto r = static_cast<Eigen::Index>(ys.size());
  Vec<S> w(r);
  std::vector<MlpTape<S>> attn_tapes(r);
  std::vector<Mat<S>> attn_out(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    attn_out[i] = mlp_forward(attn_mlp, Mat<S>(ys[i].transpose()), act,
                              tape ? &attn_tapes[i] : nullptr);
    w[i] = (attn_out[i] * q)(0, 0);
  }
  const S mx = w.maxCoeff();
  Vec<S> weights = (w.array() - mx).exp();
  weights /= weights.sum();
  Vec<S> y = Vec<S>::Zero(ys[0].size());
  for (Eigen::Index i = 0; i < r; ++i) y += weights[i] * ys[i];
  if (tape) {
    tape->attn_tapes = std::move(attn_tapes);
    tape->weights = weights;
    tape->ys = ys;
  }
  return y;
}

// ---------------------------------------------------------------------------
// model forward

namespace detail {

template <typename S>
Mat<S> gather_features(const GraphBundle& g, const Subgraph& s) {
  Mat<S> x(s.num_nodes(), g.feature_dim);
  for (NodeId i = 0; i < s.num_nodes(); ++i) {
    auto row = g.feature_row(s.globals[i]);
    for (std::uint32_t j = 0; j < g.feature_dim; ++j) x(i, j) = static_cast<S>(row[j]);
  }
  return x;
}

template <typename S>
BranchTape<S> branch_forward(Mat<S> x, Subgraph s, const ModelConfig& cfg,
                             const BranchParamsT<S>& bp, bool train_mode, Rng* rng,
                             Vec<S>* logits_out) {
  if (cfg.arch == Arch::SGC)
    throw std::runtime_error("model_forward: SGC uses sgc_forward");
  BranchTape<S> tape;
  tape.sub = std::move(s);
  tape.h0 = x;
  if (cfg.arch == Arch::GCN) tape.adj = norm_adj_dense<S>(tape.sub, NormKind::SYM);
  if (cfg.arch == Arch::SAGE) tape.adj = norm_adj_dense<S>(tape.sub, NormKind::RW);

  const bool use_dropout = train_mode && cfg.dropout > 0.0 && rng;
  Mat<S> cur = std::move(x);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int l = 0; l < cfg.num_layers; ++l) {
    if (use_dropout) {
      Mat<S> mask(cur.rows(), cur.cols());
      const S keep_scale = static_cast<S>(1.0 / (1.0 - cfg.dropout));
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = unif(*rng) < cfg.dropout ? S(0) : keep_scale;
      cur = cur.cwiseProduct(mask);
      tape.drop_mask.push_back(std::move(mask));
    }
    tape.x_in.push_back(cur);
    LayerTape<S> lt;
    switch (cfg.arch) {
      case Arch::GCN:
        cur = gcn_layer(cur, tape.adj, bp.layers[l], cfg.activation, &lt);
        break;
      case Arch::SAGE:
        cur = sage_layer(cur, tape.adj, bp.layers[l], cfg.activation, &lt);
        break;
      case Arch::GIN:
        cur = gin_layer(cur, tape.sub, bp.layers[l], cfg.activation, &lt);
        break;
      case Arch::GAT:
        cur = gat_layer(cur, tape.sub, bp.layers[l], cfg.activation);
        break;
      case Arch::SGC: break;
    }
    tape.layer_tapes.push_back(std::move(lt));
    tape.h_out.push_back(cur);
  }

  if (cfg.jk_concat) {
    tape.z.resize(cur.rows(), cfg.embed_dim());
    for (int l = 0; l < cfg.num_layers; ++l)
      tape.z.middleCols(static_cast<Eigen::Index>(l) * cfg.hidden_dim, cfg.hidden_dim) =
          tape.h_out[l];
  } else {
    tape.z = cur;
  }
  tape.pooled = readout(tape.z, tape.sub.target_local, cfg.pooling, bp, cfg.activation,
                        cfg.sort_k, &tape.readout_tape);
  const Vec<S> target_row = tape.z.row(tape.sub.target_local).transpose();
  *logits_out = head_apply(tape.pooled, target_row, bp.head, cfg.activation, &tape.head_tape);
  return tape;
}

}  // namespace detail

template <typename S>
ForwardTape<S> model_forward(const GraphBundle& g, const std::vector<Subgraph>& branch_subs,
                             const ModelConfig& cfg, const ParamSetT<S>& params,
                             bool train_mode, Rng* rng) {
  cfg.validate();
  if (branch_subs.size() != params.branches.size())
    throw std::runtime_error("model_forward: branch count mismatch");
  ForwardTape<S> out;
  std::vector<Vec<S>> ys(branch_subs.size());
  for (std::size_t b = 0; b < branch_subs.size(); ++b) {
    Subgraph sub = branch_subs[b];
    if (train_mode && cfg.dropedge > 0.0 && rng) sub = dropedge(sub, cfg.dropedge, *rng);
    Mat<S> x = detail::gather_features<S>(g, sub);
    out.branches.push_back(detail::branch_forward<S>(std::move(x), std::move(sub), cfg,
                                                     params.branches[b], train_mode, rng,
                                                     &ys[b]));
  }
  if (ys.size() == 1) {
    out.logits = ys[0];
  } else {
    out.logits = ensemble_combine(ys, params.ens_attn, params.ens_q, cfg.activation, &out.ens);
  }
  return out;
}

template <typename S>
ForwardTape<S> model_forward_x(const Mat<S>& x, const Subgraph& s, const ModelConfig& cfg,
                               const ParamSetT<S>& params) {
  cfg.validate();
  ForwardTape<S> out;
  Vec<S> y;
  out.branches.push_back(
      detail::branch_forward<S>(x, s, cfg, params.branches[0], false, nullptr, &y));
  out.logits = std::move(y);
  return out;
}

// ---------------------------------------------------------------------------
// backward

namespace detail {

template <typename S>
Mat<S> gcn_backward(const LayerTape<S>& t, const Mat<S>& adj, const LayerParamsT<S>& p,
                    Act act, const Mat<S>& dout, LayerParamsT<S>& g) {
  Mat<S> dpre = act_backward(t.pre, act, p.prelu, dout, p.prelu.size() ? &g.prelu : nullptr);
  g.bias.row(0) += dpre.colwise().sum();
  g.w += t.agg.transpose() * dpre;
  return adj.transpose() * (dpre * p.w.transpose());
}

template <typename S>
Mat<S> sage_backward(const LayerTape<S>& t, const Mat<S>& adj, const LayerParamsT<S>& p,
                     Act act, const Mat<S>& dout, LayerParamsT<S>& g) {
  Mat<S> dpre = act_backward(t.pre, act, p.prelu, dout, p.prelu.size() ? &g.prelu : nullptr);
  g.bias.row(0) += dpre.colwise().sum();
  g.w += t.x.transpose() * dpre;
  g.w2 += t.agg.transpose() * dpre;
  return dpre * p.w.transpose() + adj.transpose() * (dpre * p.w2.transpose());
}

template <typename S>
Mat<S> gin_backward(const LayerTape<S>& t, const Subgraph& s, const LayerParamsT<S>& p,
                    Act act, const Mat<S>& dout, LayerParamsT<S>& g) {
  const Eigen::Index din = t.x.cols();
  const Eigen::Index dmsg = p.mlp_msg.out_dim();
  Mat<S> dupd_in = mlp_backward(p.mlp_upd, t.gin_upd, act, dout, g.mlp_upd);
  Mat<S> dx = dupd_in.leftCols(din);
  const Mat<S> dsum = dupd_in.rightCols(dmsg);
  Mat<S> dmsg_out(static_cast<Eigen::Index>(s.indices.size()), dmsg);
  for (NodeId v = 0; v < s.num_nodes(); ++v)
    for (auto e = s.indptr[v]; e < s.indptr[v + 1]; ++e)
      dmsg_out.row(static_cast<Eigen::Index>(e)) = dsum.row(v);
  Mat<S> dmsg_in = mlp_backward(p.mlp_msg, t.gin_msg, act, std::move(dmsg_out), g.mlp_msg);
  for (NodeId v = 0; v < s.num_nodes(); ++v) {
    for (auto e = s.indptr[v]; e < s.indptr[v + 1]; ++e) {
      const auto row = static_cast<Eigen::Index>(e);
      dx.row(v) += dmsg_in.row(row).head(din);
      dx.row(s.indices[e]) += dmsg_in.row(row).tail(din);
    }
  }
  return dx;
}

template <typename S>
void branch_backward(const BranchTape<S>& tape, const Vec<S>& dy, const ModelConfig& cfg,
                     const BranchParamsT<S>& bp, BranchParamsT<S>& grad) {
  const Eigen::Index d = tape.z.cols();
  // head
  Mat<S> dhead_in =
      mlp_backward(bp.head, tape.head_tape, cfg.activation, Mat<S>(dy.transpose()), grad.head);
  const Vec<S> dpooled = dhead_in.row(0).head(d).transpose();
  const Vec<S> dtarget = dhead_in.row(0).tail(d).transpose();

  Mat<S> dz = Mat<S>::Zero(tape.z.rows(), d);
  switch (cfg.pooling) {
    case Pooling::CENTER:
      dz.row(tape.sub.target_local) += dpooled.transpose();
      break;
    case Pooling::SUM:
      dz.rowwise() += dpooled.transpose();
      break;
    case Pooling::MEAN:
      dz.rowwise() += dpooled.transpose() / static_cast<S>(tape.z.rows());
      break;
    case Pooling::MAX:
      for (Eigen::Index c = 0; c < d; ++c) dz(tape.readout_tape.max_arg[c], c) += dpooled[c];
      break;
    case Pooling::SORT: {
      Mat<S> dflat = mlp_backward(bp.sort_mlp, tape.readout_tape.sort_tape, cfg.activation,
                                  Mat<S>(dpooled.transpose()), grad.sort_mlp);
      for (int j = 0; j < cfg.sort_k; ++j) {
        const auto row = tape.readout_tape.sort_rows[j];
        if (row >= 0) dz.row(row) += dflat.block(0, static_cast<Eigen::Index>(j) * d, 1, d);
      }
      break;
    }
  }
  dz.row(tape.sub.target_local) += dtarget.transpose();

  // per-layer output grads (jk concat feeds every layer directly)
  std::vector<Mat<S>> dh(cfg.num_layers);
  if (cfg.jk_concat) {
    for (int l = 0; l < cfg.num_layers; ++l)
      dh[l] = dz.middleCols(static_cast<Eigen::Index>(l) * cfg.hidden_dim, cfg.hidden_dim);
  } else {
    for (int l = 0; l + 1 < cfg.num_layers; ++l)
      dh[l] = Mat<S>::Zero(tape.z.rows(), cfg.hidden_dim);
    dh[cfg.num_layers - 1] = dz;
  }

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    Mat<S> dx;
    switch (cfg.arch) {
      case Arch::GCN:
        dx = gcn_backward(tape.layer_tapes[l], tape.adj, bp.layers[l], cfg.activation, dh[l],
                          grad.layers[l]);
        break;
      case Arch::SAGE:
        dx = sage_backward(tape.layer_tapes[l], tape.adj, bp.layers[l], cfg.activation, dh[l],
                           grad.layers[l]);
        break;
      case Arch::GIN:
        dx = gin_backward(tape.layer_tapes[l], tape.sub, bp.layers[l], cfg.activation, dh[l],
                          grad.layers[l]);
        break;
      default:
        throw std::runtime_error("backward: unsupported architecture");
    }
    if (!tape.drop_mask.empty()) dx = dx.cwiseProduct(tape.drop_mask[l]);
    if (l > 0) dh[l - 1] += dx;
  }
}

}  // namespace detail

template <typename S>
void accumulate_grad(const ForwardTape<S>& tape, const Vec<S>& dlogits, const ModelConfig& cfg,
                     const ParamSetT<S>& params, ParamSetT<S>& grads) {
  std::vector<Vec<S>> dys(tape.branches.size());
  if (tape.branches.size() == 1) {
    dys[0] = dlogits;
  } else {
    // y = sum_i w~_i y_i with w_i = MLP(y_i) . q
    const auto& ens = tape.ens;
    const auto r = static_cast<Eigen::Index>(tape.branches.size());
    Vec<S> dwt(r);
    for (Eigen::Index i = 0; i < r; ++i) {
      dys[i] = ens.weights[i] * dlogits;
      dwt[i] = ens.ys[i].dot(dlogits);
    }
    const S inner = ens.weights.dot(dwt);
    const Vec<S> dw = ens.weights.cwiseProduct((dwt.array() - inner).matrix());
    for (Eigen::Index i = 0; i < r; ++i) {
      // w_i = a_i . q
      Mat<S> a_i = mlp_forward(params.ens_attn, Mat<S>(ens.ys[i].transpose()), cfg.activation);
      grads.ens_q += dw[i] * a_i.transpose();
      Mat<S> da = dw[i] * params.ens_q.transpose();
      Mat<S> dy_extra = mlp_backward(params.ens_attn, ens.attn_tapes[i], cfg.activation,
                                     std::move(da), grads.ens_attn);
      dys[i] += dy_extra.row(0).transpose();
    }
  }
  for (std::size_t b = 0; b < tape.branches.size(); ++b)
    detail::branch_backward(tape.branches[b], dys[b], cfg, params.branches[b],
                            grads.branches[b]);
}

template <typename S>
std::pair<double, ParamSetT<S>> loss_and_grad(const std::vector<ForwardTape<S>>& tapes,
                                              const std::vector<std::uint32_t>& labels,
                                              const ModelConfig& cfg,
                                              const ParamSetT<S>& params) {
  if (tapes.size() != labels.size()) throw std::runtime_error("loss: batch size mismatch");
  ParamSetT<S> grads = zero_like(params);
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(tapes.size());
  for (std::size_t i = 0; i < tapes.size(); ++i) {
    if (labels[i] >= static_cast<std::uint32_t>(cfg.num_classes))
      throw std::runtime_error("loss: label out of range");
    const Vec<S>& logits = tapes[i].logits;
    const S mx = logits.maxCoeff();
    Vec<S> p = (logits.array() - mx).exp();
    p /= p.sum();
    loss -= inv_b * std::log(std::max(static_cast<double>(p[labels[i]]), 1e-300));
    Vec<S> dlogits = p * static_cast<S>(inv_b);
    dlogits[labels[i]] -= static_cast<S>(inv_b);
    accumulate_grad(tapes[i], dlogits, cfg, params, grads);
  }
  if (!std::isfinite(loss)) throw std::runtime_error("loss: non-finite value");
  return {loss, std::move(grads)};
}

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
void adam_step(ParamSetT<S>& params, const ParamSetT<S>& grads, AdamState<S>& state, double lr,
               double beta1, double beta2, double eps) {
  auto ps = params.collect();
  auto gs = const_cast<ParamSetT<S>&>(grads).collect();
  if (ps.size() != gs.size()) throw std::runtime_error("adam: param/grad shape mismatch");
  if (state.m.empty()) {
    for (auto* p : ps) {
      state.m.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      state.v.push_back(Mat<S>::Zero(p->rows(), p->cols()));
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = *gs[i];
    m = static_cast<S>(beta1) * m + static_cast<S>(1.0 - beta1) * g;
    v = static_cast<S>(beta2) * v + static_cast<S>(1.0 - beta2) * g.cwiseProduct(g);
    const Mat<S> mhat = m / static_cast<S>(bc1);
    const Mat<S> vhat = v / static_cast<S>(bc2);
    *ps[i] -= (static_cast<S>(lr) * mhat.array() / (vhat.array().sqrt() + static_cast<S>(eps)))
                  .matrix();
  }
}

}  // namespace gscope
