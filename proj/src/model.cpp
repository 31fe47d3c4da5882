#include "gscope/model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gscope {

namespace {

std::vector<std::vector<Subgraph>> subgraphs_per_target(const GraphBundle& g,
                                                        const std::vector<NodeId>& targets,
                                                        const ExtractConfig& ext) {
  const auto per_branch = extract_batch_ensemble(g, targets, ext);
  std::vector<std::vector<Subgraph>> per_target(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    per_target[i].reserve(per_branch.size());
    for (const auto& branch : per_branch) per_target[i].push_back(branch[i]);
  }
  return per_target;
}

double accuracy_of(const GraphBundle& g, const ModelConfig& cfg, const ParamSetT<float>& params,
                   const std::vector<std::vector<Subgraph>>& subs,
                   const std::vector<NodeId>& targets) {
  if (targets.empty()) throw std::runtime_error("evaluate: empty split");
  std::int64_t correct = 0;
#pragma omp parallel for schedule(dynamic, 8) reduction(+ : correct)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(targets.size()); ++i) {
    const auto tape = model_forward<float>(g, subs[i], cfg, params, false, nullptr);
    Eigen::Index arg = 0;
    tape.logits.maxCoeff(&arg);
    if (static_cast<std::uint32_t>(arg) == g.labels[targets[i]]) correct++;
  }
  return static_cast<double>(correct) / static_cast<double>(targets.size());
}

}  // namespace

TrainResult train(const GraphBundle& g, const ModelConfig& cfg, const ExtractConfig& ext,
                  const TrainHyper& hyper) {
  cfg.validate();
  ext.validate();
  if (!g.has_labels() || !g.has_split())
    throw std::runtime_error("train: graph has no labels/split");
  if (cfg.arch == Arch::GAT || cfg.arch == Arch::SGC)
    throw std::runtime_error("train: architecture supports forward only here");
  if (static_cast<int>(ext.members.size()) != cfg.ensemble_branches)
    throw std::runtime_error("train: extract members must match ensemble branches");

  const auto train_targets = g.split_nodes(0);
  const auto val_targets = g.split_nodes(1);
  const auto test_targets = g.split_nodes(2);
  if (train_targets.empty()) throw std::runtime_error("train: empty train split");

  // eval-time scopes are fixed; training perturbs them per-epoch via dropedge
  const auto train_subs = subgraphs_per_target(g, train_targets, ext);
  const auto val_subs = subgraphs_per_target(g, val_targets, ext);
  const auto test_subs = subgraphs_per_target(g, test_targets, ext);

  TrainResult result;
  result.params = init_params<float>(cfg, hyper.seed);
  AdamState<float> adam;

  ParamSetT<float> best_params = result.params;
  double best_val = -1.0;
  std::vector<std::size_t> order(train_targets.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(mix64(hyper.seed, 0xe90c, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t num_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const auto end = std::min(order.size(), start + hyper.batch_size);
      const auto bsize = end - start;
      std::vector<double> slot_loss(bsize, 0.0);
      std::vector<ParamSetT<float>> slot_grads(bsize);
      // per-target grads land in their own slot, then reduce in index order,
      // so the update is identical for any worker count
#pragma omp parallel for schedule(dynamic, 4)
      for (std::int64_t k = 0; k < static_cast<std::int64_t>(bsize); ++k) {
        const auto idx = order[start + k];
        const NodeId target = train_targets[idx];
        Rng rng = make_rng(mix64(hyper.seed, mix64(0xd202, epoch), target));
        const auto tape =
            model_forward<float>(g, train_subs[idx], cfg, result.params, true, &rng);
        auto [l, grad] = loss_and_grad<float>({tape}, {g.labels[target]}, cfg, result.params);
        slot_loss[k] = l;
        slot_grads[k] = std::move(grad);
      }
      ParamSetT<float> grads = zero_like(result.params);
      auto acc = grads.collect();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < bsize; ++k) {
        auto part = slot_grads[k].collect();
        for (std::size_t j = 0; j < acc.size(); ++j) *acc[j] += *part[j];
        batch_loss += slot_loss[k];
      }
      const float inv = 1.0f / static_cast<float>(bsize);
      for (auto* m : acc) *m *= inv;
      adam_step(result.params, grads, adam, hyper.lr, hyper.beta1, hyper.beta2,
                hyper.adam_eps);
      epoch_loss += batch_loss / static_cast<double>(bsize);
      num_batches++;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = epoch_loss / static_cast<double>(num_batches);
    em.train_acc = accuracy_of(g, cfg, result.params, train_subs, train_targets);
    em.val_acc = val_targets.empty()
                     ? 0.0
                     : accuracy_of(g, cfg, result.params, val_subs, val_targets);
    em.test_acc = test_targets.empty()
                      ? 0.0
                      : accuracy_of(g, cfg, result.params, test_subs, test_targets);
    result.history.push_back(em);

    const double watched = val_targets.empty() ? em.train_acc : em.val_acc;
    if (watched > best_val) {
      best_val = watched;
      result.best_epoch = epoch;
      best_params = result.params;
    }
    if (epoch - result.best_epoch >= hyper.patience) break;
  }

  result.params = std::move(best_params);
  return result;
}

double evaluate_targets(const GraphBundle& g, const ModelConfig& cfg,
                        const ParamSetT<float>& params, const ExtractConfig& ext,
                        const std::vector<NodeId>& targets) {
  if (!g.has_labels()) throw std::runtime_error("evaluate: graph has no labels");
  const auto subs = subgraphs_per_target(g, targets, ext);
  return accuracy_of(g, cfg, params, subs, targets);
}

double evaluate(const GraphBundle& g, const ModelConfig& cfg, const ParamSetT<float>& params,
                const ExtractConfig& ext, std::uint8_t split) {
  return evaluate_targets(g, cfg, params, ext, g.split_nodes(split));
}

// ---------------------------------------------------------------------------
// checkpoint / metrics

namespace {

constexpr std::uint32_t kCkptMagic = 0x47534350u;  // "GSCP"
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T x;
  f.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamSetT<float>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  put(f, kCkptMagic);
  put(f, kCkptVersion);
  put(f, static_cast<std::int32_t>(cfg.arch));
  put(f, static_cast<std::int32_t>(cfg.num_layers));
  put(f, static_cast<std::int32_t>(cfg.hidden_dim));
  put(f, static_cast<std::int32_t>(cfg.num_heads));
  put(f, static_cast<std::int32_t>(cfg.pooling));
  put(f, static_cast<std::int32_t>(cfg.sort_k));
  put(f, static_cast<std::uint8_t>(cfg.jk_concat));
  put(f, static_cast<std::int32_t>(cfg.ensemble_branches));
  put(f, cfg.dropout);
  put(f, cfg.dropedge);
  put(f, static_cast<std::int32_t>(cfg.activation));
  put(f, static_cast<std::int32_t>(cfg.input_dim));
  put(f, static_cast<std::int32_t>(cfg.num_classes));
  const auto mats = params.collect();
  put(f, static_cast<std::uint64_t>(mats.size()));
  for (const auto* m : mats) {
    put(f, static_cast<std::uint64_t>(m->rows()));
    put(f, static_cast<std::uint64_t>(m->cols()));
    f.write(reinterpret_cast<const char*>(m->data()),
            static_cast<std::streamsize>(sizeof(float) * m->size()));
  }
}

std::pair<ModelConfig, ParamSetT<float>> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("missing file: " + path);
  if (get<std::uint32_t>(f) != kCkptMagic) throw std::runtime_error("checkpoint: bad magic");
  if (get<std::uint32_t>(f) != kCkptVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  ModelConfig cfg;
  cfg.arch = static_cast<Arch>(get<std::int32_t>(f));
  cfg.num_layers = get<std::int32_t>(f);
  cfg.hidden_dim = get<std::int32_t>(f);
  cfg.num_heads = get<std::int32_t>(f);
  cfg.pooling = static_cast<Pooling>(get<std::int32_t>(f));
  cfg.sort_k = get<std::int32_t>(f);
  cfg.jk_concat = get<std::uint8_t>(f) != 0;
  cfg.ensemble_branches = get<std::int32_t>(f);
  cfg.dropout = get<double>(f);
  cfg.dropedge = get<double>(f);
  cfg.activation = static_cast<Act>(get<std::int32_t>(f));
  cfg.input_dim = get<std::int32_t>(f);
  cfg.num_classes = get<std::int32_t>(f);

  ParamSetT<float> params = init_params<float>(cfg, 0);
  auto mats = params.collect();
  const auto count = get<std::uint64_t>(f);
  if (count != mats.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto* m : mats) {
    const auto rows = get<std::uint64_t>(f);
    const auto cols = get<std::uint64_t>(f);
    if (rows != static_cast<std::uint64_t>(m->rows()) ||
        cols != static_cast<std::uint64_t>(m->cols()))
      throw std::runtime_error("checkpoint: parameter shape mismatch");
    f.read(reinterpret_cast<char*>(m->data()),
           static_cast<std::streamsize>(sizeof(float) * m->size()));
    if (!f) throw std::runtime_error("checkpoint: truncated payload");
  }
  return {cfg, std::move(params)};
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "epoch,split,loss,accuracy\n";
  for (const auto& em : history) {
    f << em.epoch << ",train," << em.train_loss << "," << em.train_acc << "\n";
    f << em.epoch << ",val,," << em.val_acc << "\n";
    f << em.epoch << ",test,," << em.test_acc << "\n";
  }
}

// ---------------------------------------------------------------------------
// single-matrix softmax regression (SGC weight training)

Eigen::MatrixXd train_softmax_regression(const Eigen::MatrixXd& feats,
                                         const std::vector<std::uint32_t>& labels,
                                         const std::vector<NodeId>& train_idx,
                                         std::uint32_t num_classes, int steps, double lr) {
  const Eigen::Index d = feats.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, num_classes);
  Eigen::MatrixXd m = w, v = w;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::MatrixXd xt(train_idx.size(), d);
  for (std::size_t i = 0; i < train_idx.size(); ++i) xt.row(i) = feats.row(train_idx[i]);

  for (int t = 1; t <= steps; ++t) {
    Eigen::MatrixXd logits = xt * w;
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double mx = logits.row(i).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
      p.row(i) = e / e.sum();
    }
    for (std::size_t i = 0; i < train_idx.size(); ++i)
      p(static_cast<Eigen::Index>(i), labels[train_idx[i]]) -= 1.0;
    Eigen::MatrixXd grad = xt.transpose() * p / static_cast<double>(train_idx.size());
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, t), bc2 = 1.0 - std::pow(beta2, t);
    w -= (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + eps)).matrix();
  }
  return w;
}

double softmax_regression_accuracy(const Eigen::MatrixXd& feats, const Eigen::MatrixXd& w,
                                   const std::vector<std::uint32_t>& labels,
                                   const std::vector<NodeId>& idx) {
  if (idx.empty()) throw std::runtime_error("accuracy: empty index set");
  std::int64_t correct = 0;
  for (NodeId i : idx) {
    Eigen::Index arg = 0;
    (feats.row(i) * w).maxCoeff(&arg);
    if (static_cast<std::uint32_t>(arg) == labels[i]) correct++;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace gscope
