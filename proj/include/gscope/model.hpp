#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gscope/extract.hpp"
#include "gscope/graph.hpp"
#include "gscope/types.hpp"

namespace gscope {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Arch { GCN, SAGE, GAT, GIN, SGC };
enum class Pooling { CENTER, SUM, MEAN, MAX, SORT };
enum class Act { RELU, ELU, PRELU, IDENTITY };

struct ModelConfig {
  Arch arch = Arch::GCN;
  int num_layers = 3;  // model depth, decoupled from the subgraph depth
  int hidden_dim = 256;
  int num_heads = 1;  // GAT only; must divide hidden_dim
  Pooling pooling = Pooling::CENTER;
  int sort_k = 10;  // SORT pooling row count (shorter subgraphs are padded)
  bool jk_concat = false;
  int ensemble_branches = 1;
  double dropout = 0.0;
  double dropedge = 0.0;
  Act activation = Act::RELU;
  int input_dim = 0;
  int num_classes = 0;

  void validate() const;
  int embed_dim() const { return jk_concat ? num_layers * hidden_dim : hidden_dim; }
};

// ---------------------------------------------------------------------------
// activations

template <typename S>
inline S act_f(Act a, S x, S slope) {
  switch (a) {
    case Act::RELU: return x > S(0) ? x : S(0);
    case Act::ELU: return x > S(0) ? x : std::expm1(x);
    case Act::PRELU: return x > S(0) ? x : slope * x;
    case Act::IDENTITY: return x;
  }
  return x;
}

template <typename S>
inline S act_df(Act a, S x, S slope) {
  switch (a) {
    case Act::RELU: return x > S(0) ? S(1) : S(0);
    case Act::ELU: return x > S(0) ? S(1) : std::exp(x);
    case Act::PRELU: return x > S(0) ? S(1) : slope;
    case Act::IDENTITY: return S(1);
  }
  return S(1);
}

// ---------------------------------------------------------------------------
// perceptrons (used for GIN message/update, heads, sort pooling, ensemble attn)

template <typename S>
struct MlpT {
  std::vector<Mat<S>> w;      // layer i: [d_in x d_out]
  std::vector<Mat<S>> b;      // 1 x d_out
  std::vector<Mat<S>> prelu;  // 1x1 slope per hidden activation (PRELU only)

  int num_layers() const { return static_cast<int>(w.size()); }
  int out_dim() const { return static_cast<int>(w.back().cols()); }
};

template <typename S>
struct MlpTape {
  std::vector<Mat<S>> xs;   // input to each layer
  std::vector<Mat<S>> pre;  // pre-activation of each layer
};

template <typename S>
Mat<S> mlp_forward(const MlpT<S>& mlp, const Mat<S>& x, Act act, MlpTape<S>* tape = nullptr) {
  Mat<S> cur = x;
  for (int i = 0; i < mlp.num_layers(); ++i) {
    if (tape) tape->xs.push_back(cur);
    Mat<S> pre = (cur * mlp.w[i]).rowwise() + mlp.b[i].row(0);
    if (tape) tape->pre.push_back(pre);
    if (i + 1 < mlp.num_layers()) {
      const S slope = (act == Act::PRELU) ? mlp.prelu[i](0, 0) : S(0);
      cur = pre.unaryExpr([&](S v) { return act_f(act, v, slope); });
    } else {
      cur = std::move(pre);
    }
  }
  return cur;
}

// Accumulates parameter grads into `grad` (same shapes as mlp) and returns
// the gradient w.r.t. the input.
template <typename S>
Mat<S> mlp_backward(const MlpT<S>& mlp, const MlpTape<S>& tape, Act act, Mat<S> dout,
                    MlpT<S>& grad) {
  for (int i = mlp.num_layers() - 1; i >= 0; --i) {
    Mat<S> dpre;
    if (i + 1 < mlp.num_layers()) {
      const S slope = (act == Act::PRELU) ? mlp.prelu[i](0, 0) : S(0);
      dpre = dout.cwiseProduct(
          tape.pre[i].unaryExpr([&](S v) { return act_df(act, v, slope); }));
      if (act == Act::PRELU) {
        S ds = 0;
        const auto& p = tape.pre[i];
        for (Eigen::Index r = 0; r < p.rows(); ++r)
          for (Eigen::Index c = 0; c < p.cols(); ++c)
            if (p(r, c) <= S(0)) ds += p(r, c) * dout(r, c);
        grad.prelu[i](0, 0) += ds;
      }
    } else {
      dpre = std::move(dout);
    }
    grad.w[i] += tape.xs[i].transpose() * dpre;
    grad.b[i].row(0) += dpre.colwise().sum();
    dout = dpre * mlp.w[i].transpose();
  }
  return dout;
}

// ---------------------------------------------------------------------------
// parameters

template <typename S>
struct LayerParamsT {
  Mat<S> w;     // GCN weight / SAGE self weight
  Mat<S> w2;    // SAGE neighbor weight
  Mat<S> bias;  // 1 x d_out
  Mat<S> prelu;                // 1x1 outer-activation slope (PRELU only)
  std::vector<Mat<S>> head_w;  // GAT: per-head transform [d_in x d_out/t]
  std::vector<Mat<S>> attn;    // GAT: per-head attention vector [2*(d_out/t) x 1]
  MlpT<S> mlp_msg, mlp_upd;    // GIN
};

template <typename S>
struct BranchParamsT {
  std::vector<LayerParamsT<S>> layers;
  MlpT<S> head;      // on [READOUT(Z) || Z[target]]
  MlpT<S> sort_mlp;  // SORT pooling flattener (when used)
};

template <typename S>
struct ParamSetT {
  std::vector<BranchParamsT<S>> branches;  // unshared per ensemble branch
  MlpT<S> ens_attn;                        // branch-output attention
  Mat<S> ens_q;                            // query vector [num_classes x 1]

  // Every parameter matrix in a fixed order; the basis for Adam, checkpoint
  // serialization and gradient checking.
  std::vector<Mat<S>*> collect();
  std::vector<const Mat<S>*> collect() const;
};

template <typename S>
ParamSetT<S> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename S>
ParamSetT<S> zero_like(const ParamSetT<S>& p);

// ---------------------------------------------------------------------------
// layer forwards
// Shapes: h is [n x d_in] over subgraph-local nodes; outputs [n x d_out].

template <typename S>
struct LayerTape {
  Mat<S> x;    // layer input
  Mat<S> agg;  // adj * x (GCN / SAGE neighbor path)
  Mat<S> pre;  // pre-activation
  MlpTape<S> gin_msg, gin_upd;
};

template <typename S>
Mat<S> gcn_layer(const Mat<S>& h, const Mat<S>& adj_sym, const LayerParamsT<S>& p, Act act,
                 LayerTape<S>* tape = nullptr);

template <typename S>
Mat<S> sage_layer(const Mat<S>& h, const Mat<S>& adj_rw, const LayerParamsT<S>& p, Act act,
                  LayerTape<S>* tape = nullptr);

template <typename S>
Mat<S> gin_layer(const Mat<S>& h, const Subgraph& s, const LayerParamsT<S>& p, Act mlp_act,
                 LayerTape<S>* tape = nullptr);

// Forward only; multi-head additive attention over each node's in-neighborhood
// plus self-loop, heads concatenated.
template <typename S>
Mat<S> gat_layer(const Mat<S>& h, const Subgraph& s, const LayerParamsT<S>& p, Act act);

// K-step symmetric-normalized propagation, linear map, softmax, target row.
Eigen::VectorXd sgc_forward(const Subgraph& s, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& w, int k);

// ---------------------------------------------------------------------------
// readout / head / ensemble

template <typename S>
struct ReadoutTape {
  std::vector<Eigen::Index> max_arg;     // MAX: argmax row per column
  std::vector<Eigen::Index> sort_rows;   // SORT: selected rows (-1 = zero pad)
  MlpTape<S> sort_tape;
};

template <typename S>
Vec<S> readout(const Mat<S>& z, NodeId target_local, Pooling kind,
               const BranchParamsT<S>& bp, Act act, int sort_k,
               ReadoutTape<S>* tape = nullptr);

template <typename S>
Vec<S> head_apply(const Vec<S>& pooled, const Vec<S>& target_row, const MlpT<S>& head_mlp,
                  Act act, MlpTape<S>* tape = nullptr);

// Attention-weighted combination of branch outputs: w_i = MLP(y_i) . q,
// y = sum_i softmax(w)_i * y_i.
template <typename S>
struct EnsembleTape {
  std::vector<MlpTape<S>> attn_tapes;
  Vec<S> weights;  // softmax-normalized
  std::vector<Vec<S>> ys;
};

template <typename S>
Vec<S> ensemble_combine(const std::vector<Vec<S>>& ys, const MlpT<S>& attn_mlp,
                        const Mat<S>& q, Act act, EnsembleTape<S>* tape = nullptr);

// ---------------------------------------------------------------------------
// whole-model forward / backward

template <typename S>
struct BranchTape {
  Subgraph sub;  // scope actually used (after dropedge during training)
  Mat<S> adj;    // cached normalized adjacency (empty for GIN/GAT)
  Mat<S> h0;     // subgraph feature rows
  std::vector<Mat<S>> x_in;       // per-layer input after dropout
  std::vector<Mat<S>> drop_mask;  // inverted dropout masks (empty when p = 0)
  std::vector<LayerTape<S>> layer_tapes;
  std::vector<Mat<S>> h_out;  // per-layer output
  Mat<S> z;                   // final embedding (jk concat of all layers, or last)
  ReadoutTape<S> readout_tape;
  MlpTape<S> head_tape;
  Vec<S> pooled;
};

template <typename S>
struct ForwardTape {
  std::vector<BranchTape<S>> branches;
  EnsembleTape<S> ens;
  Vec<S> logits;
};

// Runs cfg.num_layers rounds of message passing over the fixed subgraph (the
// node set never expands), then readout / head / ensemble per Algorithm-style
// composition. Dropout and dropedge fire only in train mode with an rng.
template <typename S>
ForwardTape<S> model_forward(const GraphBundle& g, const std::vector<Subgraph>& branch_subs,
                             const ModelConfig& cfg, const ParamSetT<S>& params,
                             bool train_mode, Rng* rng);

// Single-branch convenience entry with caller-supplied features (no dropout,
// no dropedge); used heavily by tests.
template <typename S>
ForwardTape<S> model_forward_x(const Mat<S>& x, const Subgraph& s, const ModelConfig& cfg,
                               const ParamSetT<S>& params);

// Mean softmax cross-entropy over a batch plus grads for every parameter via
// reverse traversal of the tapes.
template <typename S>
std::pair<double, ParamSetT<S>> loss_and_grad(const std::vector<ForwardTape<S>>& tapes,
                                              const std::vector<std::uint32_t>& labels,
                                              const ModelConfig& cfg,
                                              const ParamSetT<S>& params);

template <typename S>
void accumulate_grad(const ForwardTape<S>& tape, const Vec<S>& dlogits, const ModelConfig& cfg,
                     const ParamSetT<S>& params, ParamSetT<S>& grads);

// ---------------------------------------------------------------------------
// optimizer

template <typename S>
struct AdamState {
  std::vector<Mat<S>> m, v;
  std::int64_t step = 0;
};

template <typename S>
void adam_step(ParamSetT<S>& params, const ParamSetT<S>& grads, AdamState<S>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// ---------------------------------------------------------------------------
// training / evaluation

struct TrainHyper {
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int patience = 20;  // early stop on val-accuracy plateau
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0, val_acc = 0.0, test_acc = 0.0;
};

struct TrainResult {
  ParamSetT<float> params;  // best-validation snapshot
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
};

TrainResult train(const GraphBundle& g, const ModelConfig& cfg, const ExtractConfig& ext,
                  const TrainHyper& hyper);

// Exact-match accuracy of minibatch inference over one split (0/1/2).
double evaluate(const GraphBundle& g, const ModelConfig& cfg, const ParamSetT<float>& params,
                const ExtractConfig& ext, std::uint8_t split);

double evaluate_targets(const GraphBundle& g, const ModelConfig& cfg,
                        const ParamSetT<float>& params, const ExtractConfig& ext,
                        const std::vector<NodeId>& targets);

// Versioned little-endian binary of ModelConfig + ParamSet (f32 payload).
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamSetT<float>& params);
std::pair<ModelConfig, ParamSetT<float>> load_checkpoint(const std::string& path);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

// Single-matrix softmax regression (full-batch Adam, zero init); shared by
// the SGC propagation-power sweeps.
Eigen::MatrixXd train_softmax_regression(const Eigen::MatrixXd& feats,
                                         const std::vector<std::uint32_t>& labels,
                                         const std::vector<NodeId>& train_idx,
                                         std::uint32_t num_classes, int steps = 400,
                                         double lr = 0.05);

double softmax_regression_accuracy(const Eigen::MatrixXd& feats, const Eigen::MatrixXd& w,
                                   const std::vector<std::uint32_t>& labels,
                                   const std::vector<NodeId>& idx);

}  // namespace gscope

#include "gscope/model_impl.hpp"
