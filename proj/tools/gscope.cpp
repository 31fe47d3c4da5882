// gscope: bounded-scope graph neural network toolkit.
//
// Subcommands: convert (TSV/bundle -> bundle), extract (subgraph cache),
// train / eval (minibatch GNN on per-target scopes), cost (analytic MAC
// model), verify (numerical checks over the built-in fixtures).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "gscope/cost.hpp"
#include "gscope/extract.hpp"
#include "gscope/fixtures.hpp"
#include "gscope/model.hpp"
#include "gscope/theory.hpp"
#include "gscope/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gscope;
using nlohmann::json;

namespace {

struct ExtractFlags {
  std::string method = "ppr";
  std::uint32_t top_k = 200;
  std::uint32_t depth = 2;
  std::uint32_t budget = kUnlimitedBudget;
  double alpha = 0.15;
  double eps = 1e-4;
  double theta = -1.0;  // <0 disables thresholding
  std::uint32_t cap = 200;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--method", method, "ppr or khop")
        ->check(CLI::IsMember({"ppr", "khop"}));
    cmd->add_option("-k,--k", top_k, "ppr: nodes kept by descending score");
    cmd->add_option("--depth", depth, "khop: hops");
    cmd->add_option("--budget", budget, "khop: neighbors kept per node per hop");
    cmd->add_option("--alpha", alpha, "ppr: restart probability");
    cmd->add_option("--eps", eps, "ppr: push tolerance");
    cmd->add_option("--theta", theta, "ppr: score threshold (enables threshold mode)");
    cmd->add_option("--cap", cap, "ppr: size cap in threshold mode");
  }

  ExtractConfig to_config() const {
    ExtractConfig cfg;
    if (method == "khop") {
      cfg.members = {KHopConfig{depth, budget}};
    } else {
      PprConfig p;
      p.top_k = top_k;
      p.alpha = alpha;
      p.epsilon = eps;
      p.cap = cap;
      if (theta >= 0.0) p.threshold = theta;
      cfg.members = {p};
    }
    cfg.seed = seed;
    return cfg;
  }
};

std::vector<NodeId> resolve_targets(const GraphBundle& g, const std::string& selector) {
  if (selector == "all") {
    std::vector<NodeId> all(g.num_nodes);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  if (selector.rfind("split:", 0) == 0) {
    const std::string which = selector.substr(6);
    std::uint8_t mask = which == "train" ? 0 : which == "val" ? 1 : 2;
    if (which != "train" && which != "val" && which != "test")
      throw std::runtime_error("unknown split: " + which);
    auto nodes = g.split_nodes(mask);
    if (nodes.empty()) throw std::runtime_error("split '" + which + "' is empty");
    return nodes;
  }
  std::ifstream f(selector);
  if (!f) throw std::runtime_error("missing target file: " + selector);
  std::vector<NodeId> targets;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    targets.push_back(static_cast<NodeId>(std::stoul(line)));
  }
  return targets;
}

void write_resolved_config(const CLI::App& app, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "resolved_config.ini");
  f << app.config_to_str(true, true);
}

Arch parse_arch(const std::string& s) {
  if (s == "gcn") return Arch::GCN;
  if (s == "sage") return Arch::SAGE;
  if (s == "gat") return Arch::GAT;
  if (s == "gin") return Arch::GIN;
  if (s == "sgc") return Arch::SGC;
  throw std::runtime_error("unknown arch: " + s);
}

Pooling parse_pooling(const std::string& s) {
  if (s == "center") return Pooling::CENTER;
  if (s == "sum") return Pooling::SUM;
  if (s == "mean") return Pooling::MEAN;
  if (s == "max") return Pooling::MAX;
  if (s == "sort") return Pooling::SORT;
  throw std::runtime_error("unknown pooling: " + s);
}

Act parse_act(const std::string& s) {
  if (s == "relu") return Act::RELU;
  if (s == "elu") return Act::ELU;
  if (s == "prelu") return Act::PRELU;
  if (s == "identity") return Act::IDENTITY;
  throw std::runtime_error("unknown activation: " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bounded-scope GNN toolkit"};
  app.require_subcommand(1);
  // `gscope --config file <cmd>`: the file carries [cmd] sections; command
  // line flags override file values; unknown keys are rejected
  app.set_config("--config", "", "read options from an INI file (sections per subcommand)");
  app.allow_config_extras(false);

  // ---- convert ----------------------------------------------------------
  auto* convert =
      app.add_subcommand("convert", "build a graph bundle from TSV or a bundle")
          ->configurable();
  std::string cv_edges, cv_feats, cv_labels, cv_split, cv_bundle, cv_out;
  std::uint32_t cv_num_nodes = 0;
  bool cv_directed = false;
  convert->add_option("--edges", cv_edges, "edge list TSV (u<TAB>v per line)");
  convert->add_option("--feats", cv_feats, "feature TSV, one row per node");
  convert->add_option("--labels", cv_labels, "label TSV, one class id per line");
  convert->add_option("--split", cv_split, "split TSV (train/val/test/none or 0-3)");
  convert->add_option("--bundle", cv_bundle, "existing bundle directory to re-write");
  convert->add_option("--num-nodes", cv_num_nodes, "node count (default: max id + 1)");
  convert->add_flag("--directed", cv_directed,
                    "edge rows are directed; they are symmetrized on load");
  convert->add_option("--out", cv_out, "output bundle directory")->required();

  // ---- extract ----------------------------------------------------------
  auto* extract =
      app.add_subcommand("extract", "write a subgraph cache for a target set")
          ->configurable();
  std::string ex_graph, ex_targets = "all", ex_out;
  ExtractFlags ex_flags;
  extract->add_option("--graph", ex_graph, "bundle directory")->required();
  extract->add_option("--targets", ex_targets, "all | split:train|val|test | id file");
  ex_flags.attach(extract);
  extract->add_option("--seed", ex_flags.seed, "rng seed");
  extract->add_option("--out", ex_out, "cache file")->required();

  // ---- train ------------------------------------------------------------
  auto* train_cmd =
      app.add_subcommand("train", "minibatch training on per-target scopes")
          ->configurable();
  std::string tr_graph, tr_arch = "gcn", tr_pooling = "center", tr_act = "relu", tr_out;
  int tr_layers = 3, tr_dim = 256, tr_heads = 1, tr_sort_k = 10, tr_epochs = 100;
  int tr_batch = 64, tr_patience = 20;
  bool tr_jk = false;
  double tr_dropout = 0.0, tr_dropedge = 0.0, tr_lr = 1e-2;
  ExtractFlags tr_flags;
  train_cmd->add_option("--graph", tr_graph)->required();
  train_cmd->add_option("--arch", tr_arch)->check(CLI::IsMember({"gcn", "sage", "gin"}));
  train_cmd->add_option("--layers", tr_layers, "model depth (independent of scope depth)");
  train_cmd->add_option("--dim", tr_dim);
  train_cmd->add_option("--heads", tr_heads);
  train_cmd->add_option("--pooling", tr_pooling)
      ->check(CLI::IsMember({"center", "sum", "mean", "max", "sort"}));
  train_cmd->add_option("--sort-k", tr_sort_k);
  train_cmd->add_flag("--jk", tr_jk, "concatenate all layer outputs before the head");
  train_cmd->add_option("--act", tr_act)
      ->check(CLI::IsMember({"relu", "elu", "prelu", "identity"}));
  train_cmd->add_option("--dropout", tr_dropout);
  train_cmd->add_option("--dropedge", tr_dropedge);
  train_cmd->add_option("--epochs", tr_epochs);
  train_cmd->add_option("--batch", tr_batch);
  train_cmd->add_option("--lr", tr_lr);
  train_cmd->add_option("--patience", tr_patience);
  tr_flags.attach(train_cmd);
  train_cmd->add_option("--seed", tr_flags.seed, "rng seed");
  train_cmd->add_option("--out", tr_out, "output directory")->required();

  // ---- eval -------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on one split")
                       ->configurable();
  std::string ev_graph, ev_ckpt, ev_split = "test";
  ExtractFlags ev_flags;
  eval_cmd->add_option("--graph", ev_graph)->required();
  eval_cmd->add_option("--ckpt", ev_ckpt)->required();
  eval_cmd->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}));
  ev_flags.attach(eval_cmd);
  eval_cmd->add_option("--seed", ev_flags.seed, "rng seed");

  // ---- cost -------------------------------------------------------------
  auto* cost_cmd =
      app.add_subcommand("cost", "analytic inference-cost report")->configurable();
  std::string co_graph, co_arch = "gcn", co_regime = "bounded", co_scope, co_targets = "all";
  std::string co_out;
  int co_layers = 3, co_dim = 256;
  std::uint64_t co_seed = 0;
  cost_cmd->add_option("--graph", co_graph)->required();
  cost_cmd->add_option("--arch", co_arch)
      ->check(CLI::IsMember({"gcn", "sage", "gat", "gin", "sgc"}));
  cost_cmd->add_option("--layers", co_layers);
  cost_cmd->add_option("--dim", co_dim);
  cost_cmd->add_option("--regime", co_regime)->check(CLI::IsMember({"normal", "bounded"}));
  cost_cmd
      ->add_option("--scope-from", co_scope,
                   "normal: hop:<L>; bounded: subgraph cache file")
      ->required();
  cost_cmd->add_option("--targets", co_targets, "all | split:... | id file (hop mode)");
  cost_cmd->add_option("--seed", co_seed);
  cost_cmd->add_option("--out", co_out, "also write the per-layer table as CSV");

  // ---- verify -----------------------------------------------------------
  auto* verify_cmd =
      app.add_subcommand("verify", "run the numerical verification suite")
          ->configurable();
  std::string vf_out;
  bool vf_fast = false;
  verify_cmd->add_option("--out-dir", vf_out, "directory for convergence CSVs");
  verify_cmd->add_flag("--fast", vf_fast, "skip the sweep and training checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*convert) {
      GraphBundle g;
      if (!cv_bundle.empty()) {
        g = load_graph(cv_bundle);
      } else {
        if (cv_edges.empty()) throw std::runtime_error("convert: need --edges or --bundle");
        NodeId max_id = 0;
        auto edges = load_edge_tsv(cv_edges, &max_id);
        std::uint32_t dim = 0, rows = 0;
        std::vector<float> feats;
        if (!cv_feats.empty()) feats = load_feature_tsv(cv_feats, &dim, &rows);
        std::uint32_t n = cv_num_nodes ? cv_num_nodes : (rows ? rows : max_id + 1);
        if (rows && cv_num_nodes && rows != cv_num_nodes)
          throw std::runtime_error("convert: --num-nodes disagrees with feature rows");
        if (max_id >= n && !edges.empty())
          throw std::runtime_error("convert: edge id beyond node count (id gap?)");
        std::vector<std::uint32_t> labels;
        std::uint32_t num_classes = 0;
        if (!cv_labels.empty()) {
          labels = load_label_tsv(cv_labels);
          if (labels.size() != n) throw std::runtime_error("convert: label rows != nodes");
          for (auto y : labels) num_classes = std::max(num_classes, y + 1);
        }
        std::vector<std::uint8_t> split;
        if (!cv_split.empty()) {
          split = load_split_tsv(cv_split);
          if (split.size() != n) throw std::runtime_error("convert: split rows != nodes");
        }
        // undirected input rows carry both directions implicitly; directed
        // rows are unioned with their reverses either way by build_graph
        (void)cv_directed;
        g = build_graph(n, edges, dim, std::move(feats), num_classes, std::move(labels),
                        std::move(split));
      }
      save_graph(g, cv_out);
      write_resolved_config(app, cv_out);
      std::printf("wrote bundle: %u nodes, %llu undirected edges, dim %u\n", g.num_nodes,
                  static_cast<unsigned long long>(g.num_edges()), g.feature_dim);
    } else if (*extract) {
      const auto g = load_graph(ex_graph);
      const auto targets = resolve_targets(g, ex_targets);
      const auto cfg = ex_flags.to_config();
      const auto subs = extract_batch(g, targets, cfg);
      write_subgraph_cache(ex_out, subs);
      write_resolved_config(app, fs::path(ex_out).parent_path().empty()
                                     ? "."
                                     : fs::path(ex_out).parent_path());
      std::uint64_t nodes = 0, edges = 0;
      for (const auto& s : subs) {
        nodes += s.num_nodes();
        edges += s.num_edges();
      }
      std::printf("cached %zu subgraphs (avg %.1f nodes, %.1f edges)\n", subs.size(),
                  double(nodes) / subs.size(), double(edges) / subs.size());
    } else if (*train_cmd) {
      const auto g = load_graph(tr_graph);
      ModelConfig cfg;
      cfg.arch = parse_arch(tr_arch);
      cfg.num_layers = tr_layers;
      cfg.hidden_dim = tr_dim;
      cfg.num_heads = tr_heads;
      cfg.pooling = parse_pooling(tr_pooling);
      cfg.sort_k = tr_sort_k;
      cfg.jk_concat = tr_jk;
      cfg.activation = parse_act(tr_act);
      cfg.dropout = tr_dropout;
      cfg.dropedge = tr_dropedge;
      cfg.input_dim = static_cast<int>(g.feature_dim);
      cfg.num_classes = static_cast<int>(g.num_classes);
      TrainHyper hyper;
      hyper.epochs = tr_epochs;
      hyper.batch_size = tr_batch;
      hyper.lr = tr_lr;
      hyper.patience = tr_patience;
      hyper.seed = tr_flags.seed;
      const auto ext = tr_flags.to_config();

      const auto result = train(g, cfg, ext, hyper);
      fs::create_directories(tr_out);
      save_checkpoint((fs::path(tr_out) / "checkpoint.bin").string(), cfg, result.params);
      write_metrics_csv((fs::path(tr_out) / "metrics.csv").string(), result.history);
      write_resolved_config(app, tr_out);
      if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::printf("done: best epoch %d, final train/val/test = %.4f/%.4f/%.4f\n",
                    result.best_epoch, last.train_acc, last.val_acc, last.test_acc);
      } else {
        std::printf("done: 0 epochs, wrote initial parameters\n");
      }
    } else if (*eval_cmd) {
      const auto g = load_graph(ev_graph);
      auto [cfg, params] = load_checkpoint(ev_ckpt);
      const auto ext = ev_flags.to_config();
      const std::uint8_t split = ev_split == "train" ? 0 : ev_split == "val" ? 1 : 2;
      const double acc = evaluate(g, cfg, params, ext, split);
      std::printf("%s accuracy: %.4f\n", ev_split.c_str(), acc);
    } else if (*cost_cmd) {
      const auto g = load_graph(co_graph);
      const Arch arch = parse_arch(co_arch);
      CostReport rep;
      if (co_regime == "normal") {
        if (co_scope.rfind("hop:", 0) != 0)
          throw std::runtime_error("cost: normal regime needs --scope-from hop:<L>");
        const auto hops = static_cast<std::uint32_t>(std::stoul(co_scope.substr(4)));
        if (static_cast<int>(hops) != co_layers)
          throw std::runtime_error("cost: normal regime couples layers to hops");
        const auto targets = resolve_targets(g, co_targets);
        const auto prof = hop_expansion(g, targets, hops, kUnlimitedBudget, co_seed);
        rep = inference_cost(arch, co_layers, co_dim, CostRegime::NORMAL_LHOP,
                             prof.normal_stats);
      } else {
        const auto subs = read_subgraph_cache(co_scope);
        rep = inference_cost(arch, co_layers, co_dim, CostRegime::BOUNDED,
                             bounded_scope_stats(subs, co_layers));
      }
      std::printf("regime %s, %d layers, width %d, %llu target(s)\n", co_regime.c_str(),
                  co_layers, co_dim, static_cast<unsigned long long>(rep.num_targets));
      std::printf("%-6s %12s %12s %12s %16s\n", "layer", "n_in", "n_out", "m", "macs");
      for (std::size_t i = 0; i < rep.layers.size(); ++i) {
        const auto& l = rep.layers[i];
        std::printf("%-6zu %12llu %12llu %12llu %16llu\n", i + 1,
                    static_cast<unsigned long long>(l.n_in),
                    static_cast<unsigned long long>(l.n_out),
                    static_cast<unsigned long long>(l.m),
                    static_cast<unsigned long long>(l.macs));
      }
      std::printf("layer total %llu, head %llu, total %llu, per-target %.3e\n",
                  static_cast<unsigned long long>(rep.layer_total),
                  static_cast<unsigned long long>(rep.head_macs),
                  static_cast<unsigned long long>(rep.total_macs), rep.per_target());
      if (!co_out.empty()) {
        std::ofstream csv(co_out);
        csv << "layer,n_in,n_out,m,d_in,d_out,macs\n";
        for (std::size_t i = 0; i < rep.layers.size(); ++i) {
          const auto& l = rep.layers[i];
          csv << i + 1 << "," << l.n_in << "," << l.n_out << "," << l.m << "," << l.d_in
              << "," << l.d_out << "," << l.macs << "\n";
        }
        csv << "head,,,,,," << rep.head_macs << "\n";
        csv << "total,,,,,," << rep.total_macs << "\n";
        const auto parent = fs::path(co_out).parent_path();
        write_resolved_config(app, parent.empty() ? "." : parent);
      }
    } else if (*verify_cmd) {
      const auto report = run_verification(!vf_fast, vf_out);
      bool all = true;
      for (const auto& c : report.checks) {
        std::printf("[%s] %s — %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
        all = all && c.passed;
      }
      if (!all) return 2;
      std::printf("all %zu checks passed\n", report.checks.size());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
