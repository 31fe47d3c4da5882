// End-to-end runs of the command-line binary (path via GSCOPE_BIN).

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "gscope/extract.hpp"
#include "gscope/fixtures.hpp"
#include "gscope/graph.hpp"

using namespace gscope;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const char* bin = std::getenv("GSCOPE_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  std::array<char, 4096> buf;
  while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path work_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("gscope_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_karate_tsv(const fs::path& dir) {
  const auto g = fixture_karate();
  std::ofstream e(dir / "edges.tsv");
  for (NodeId u = 0; u < g.num_nodes; ++u)
    for (NodeId w : g.neighbors(u))
      if (u < w) e << u << "\t" << w << "\n";
}

}  // namespace

TEST_CASE("convert: singleton from an empty edge file") {
  const auto dir = work_dir("single");
  std::ofstream(dir / "edges.tsv").close();
  const auto r = run("convert --edges " + (dir / "edges.tsv").string() +
                     " --num-nodes 1 --out " + (dir / "bundle").string());
  CHECK(r.exit_code == 0);
  const auto g = load_graph((dir / "bundle").string());
  CHECK(g.num_nodes == 1);
  CHECK(g.num_edges() == 0);
}

TEST_CASE("convert: karate tsv and idempotent re-convert") {
  const auto dir = work_dir("karate");
  write_karate_tsv(dir);
  const auto b1 = (dir / "b1").string();
  const auto b2 = (dir / "b2").string();
  auto r = run("convert --edges " + (dir / "edges.tsv").string() + " --out " + b1);
  CHECK(r.exit_code == 0);
  const auto g = load_graph(b1);
  CHECK(g.num_nodes == 34);
  CHECK(g.num_edges() == 78);

  r = run("convert --bundle " + b1 + " --out " + b2);
  CHECK(r.exit_code == 0);
  for (const char* f : {"indptr.bin", "indices.bin", "feats.bin"})
    CHECK(slurp(fs::path(b1) / f) == slurp(fs::path(b2) / f));
  CHECK(fs::exists(fs::path(b2) / "resolved_config.ini"));
}

TEST_CASE("convert: malformed input exits 1") {
  const auto dir = work_dir("bad");
  std::ofstream bad(dir / "edges.tsv");
  bad << "0\tx\n";
  bad.close();
  const auto r = run("convert --edges " + (dir / "edges.tsv").string() + " --out " +
                     (dir / "b").string());
  CHECK(r.exit_code == 1);
  CHECK(r.out.find("error") != std::string::npos);
}

TEST_CASE("unknown flags exit 1") {
  CHECK(run("extract --frobnicate").exit_code == 1);
}

TEST_CASE("extract, cost and the depth-linearity of the report") {
  const auto dir = work_dir("pipeline");
  write_karate_tsv(dir);
  const auto bundle = (dir / "bundle").string();
  REQUIRE(run("convert --edges " + (dir / "edges.tsv").string() + " --out " + bundle)
              .exit_code == 0);
  const auto cache = (dir / "subs.bin").string();
  const auto r = run("extract --graph " + bundle + " --targets all --method ppr -k 8 --out " +
                     cache);
  CHECK(r.exit_code == 0);
  const auto subs = read_subgraph_cache(cache);
  CHECK(subs.size() == 34);
  for (const auto& s : subs) CHECK(s.num_nodes() <= 8);

  auto extract_layer_total = [&](int layers) {
    const auto res = run("cost --graph " + bundle + " --arch gcn --layers " +
                         std::to_string(layers) + " --dim 16 --regime bounded --scope-from " +
                         cache + " --out " + (dir / "cost.csv").string());
    REQUIRE(res.exit_code == 0);
    const auto pos = res.out.find("layer total ");
    REQUIRE(pos != std::string::npos);
    return std::stoull(res.out.substr(pos + 12));
  };
  const auto t3 = extract_layer_total(3);
  const auto t6 = extract_layer_total(6);
  CHECK(t6 == 2 * t3);
  CHECK(slurp(dir / "cost.csv").find("total") != std::string::npos);
}

TEST_CASE("train, eval and metric reproducibility") {
  const auto dir = work_dir("train");
  SbmParams sp;
  sp.nodes_per_block = 80;
  sp.num_blocks = 2;
  sp.p_intra = 0.1;
  sp.p_inter = 0.01;
  sp.feature_dim = 5;
  sp.mean_shift = 1.5;
  sp.seed = 6;
  save_graph(make_sbm(sp), (dir / "bundle").string());
  const std::string bundle = (dir / "bundle").string();

  SUBCASE("zero epochs still writes a loadable checkpoint") {
    const auto r = run("train --graph " + bundle +
                       " --arch gcn --layers 2 --dim 8 --epochs 0 --out " +
                       (dir / "run0").string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "run0" / "checkpoint.bin"));
    const auto ev = run("eval --graph " + bundle + " --ckpt " +
                        (dir / "run0" / "checkpoint.bin").string() +
                        " --split test --method ppr -k 8");
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("accuracy") != std::string::npos);
  }
  SUBCASE("same seed twice gives byte-identical metrics") {
    const std::string args = "train --graph " + bundle +
                             " --arch gcn --layers 2 --dim 8 --epochs 4 --batch 16 "
                             "--method ppr -k 8 --seed 3 --out ";
    CHECK(run(args + (dir / "runA").string()).exit_code == 0);
    CHECK(run(args + (dir / "runB").string()).exit_code == 0);
    const auto a = slurp(dir / "runA" / "metrics.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(dir / "runB" / "metrics.csv"));
    CHECK(fs::exists(dir / "runA" / "resolved_config.ini"));
  }
}

TEST_CASE("config file feeds options and rejects unknown keys") {
  const auto dir = work_dir("config");
  write_karate_tsv(dir);
  const auto bundle = (dir / "bundle").string();
  REQUIRE(run("convert --edges " + (dir / "edges.tsv").string() + " --out " + bundle)
              .exit_code == 0);
  {
    std::ofstream cfg(dir / "extract.ini");
    cfg << "[extract]\nmethod=khop\ndepth=1\nout=" << (dir / "c.bin").string()
        << "\ngraph=" << bundle << "\n";
  }
  CHECK(run("--config " + (dir / "extract.ini").string() + " extract").exit_code == 0);
  CHECK(read_subgraph_cache((dir / "c.bin").string()).size() == 34);

  // a command-line flag overrides the file value
  CHECK(run("--config " + (dir / "extract.ini").string() + " extract --out " +
            (dir / "c2.bin").string())
            .exit_code == 0);
  CHECK(read_subgraph_cache((dir / "c2.bin").string()).size() == 34);

  {
    std::ofstream cfg(dir / "bad.ini");
    cfg << "[extract]\nmethod=khop\nno_such_key=1\n";
  }
  CHECK(run("--config " + (dir / "bad.ini").string() + " extract").exit_code == 1);
}

TEST_CASE("verify --fast exits 0 on the healthy build") {
  const auto r = run("verify --fast");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("[PASS]") != std::string::npos);
  CHECK(r.out.find("[FAIL]") == std::string::npos);
}
