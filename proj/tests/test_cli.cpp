#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "a3t/checkpoint.hpp"
#include "a3t/cli.hpp"
#include "a3t/error.hpp"
#include "a3t/train.hpp"
#include "support.hpp"

using namespace a3t;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    out.push_back(line);
  }
  return out;
}

// Small, fast training run shared by several cases.
std::vector<std::string> small_train(const fs::path& out_dir, const std::string& epochs = "4") {
  return {"train", "--synth", "6x300", "--synth-seed", "2", "--model", "tgcn", "--history", "3",
          "--hidden", "4", "--epochs", epochs, "--eval-every", "2", "--batch-size", "32",
          "--seed", "5", "--out-dir", out_dir.string()};
}

}  // namespace

TEST_CASE("train writes checkpoint, history and manifest") {
  test::TempDir dir("cli_train");
  const Run r = cli(small_train(dir.path()));
  REQUIRE(r.code == exit_ok);
  const std::string history = test::read_text(dir / "history.csv");
  CHECK(line_count(history) == 1 + 2);  // header, epochs 2 and 4
  CHECK(fs::exists(dir / "checkpoint.txt"));
  CHECK(fs::exists(dir / "adjacency.csv"));
  CHECK(fs::exists(dir / "speeds.csv"));

  const auto manifest = nlohmann::json::parse(test::read_text(dir / "manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"] == 5);
  CHECK(manifest["config"]["model"] == "tgcn");
  REQUIRE(manifest["datasets"].size() == 2);
  for (const auto& d : manifest["datasets"]) {
    CHECK(d["sha256"] == sha256_file(d["path"].get<std::string>()));
    CHECK(d["sha256"].get<std::string>().size() == 64);
  }
  CHECK(manifest.contains("wall_clock_seconds"));
  CHECK(manifest["best_epoch"].get<std::size_t>() >= 2);
}

TEST_CASE("sha256 of a known string") {
  test::TempDir dir("sha");
  test::write_text(dir / "abc", "abc");
  CHECK(sha256_file(dir / "abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("missing data source is a usage error") {
  test::TempDir dir("cli_usage");
  const Run r = cli({"train", "--speeds", "x.csv", "--out-dir", dir.path().string()});
  CHECK(r.code == exit_config);
  CHECK(r.err.find("--graph") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(cli({"train"}).code == exit_config);
  CHECK(cli({}).code == exit_config);
  CHECK(cli({"bogus"}).code == exit_config);
  CHECK(cli({"train", "--model", "lstm", "--synth", "4x200", "--out-dir", dir.path().string()})
            .code == exit_config);
}

TEST_CASE("zero epochs saves the initialization") {
  test::TempDir dir("cli_zero");
  REQUIRE(cli(small_train(dir.path(), "0")).code == exit_ok);
  const Checkpoint c = load_checkpoint(dir / "checkpoint.txt");
  const ModelParams init = init_params(c.params.shape(), 5);
  for (std::size_t i = 0; i < init.entries().size(); ++i) {
    CHECK(test::bit_equal(c.params.entries()[i].value, init.entries()[i].value));
  }
  CHECK(line_count(test::read_text(dir / "history.csv")) == 1);
}

TEST_CASE("eval reproduces the training bookkeeping") {
  test::TempDir dir("cli_eval");
  REQUIRE(cli(small_train(dir.path(), "6")).code == exit_ok);
  const std::vector<std::string> data{"--graph", (dir / "adjacency.csv").string(), "--speeds",
                                      (dir / "speeds.csv").string()};
  const std::string speeds_hash = sha256_file(dir / "speeds.csv");

  std::vector<std::string> args{"eval", "--checkpoint", (dir / "checkpoint.txt").string(),
                                "--out", (dir / "metrics.csv").string(), "--dump-predictions",
                                (dir / "pred.csv").string()};
  args.insert(args.end(), data.begin(), data.end());
  REQUIRE(cli(args).code == exit_ok);

  // The checkpoint holds the best evaluation, so eval matches that history row.
  const auto manifest = nlohmann::json::parse(test::read_text(dir / "manifest.json"));
  const std::string best_epoch = std::to_string(manifest["best_epoch"].get<std::size_t>());
  std::string best_row;
  for (const std::string& line : lines(test::read_text(dir / "history.csv"))) {
    if (line.rfind(best_epoch + ",", 0) == 0) {
      best_row = line;
    }
  }
  REQUIRE_FALSE(best_row.empty());
  const std::string metrics_row = lines(test::read_text(dir / "metrics.csv")).at(1);
  const std::string history_metrics = best_row.substr(best_row.find(',', best_row.find(',') + 1) + 1);
  CHECK(metrics_row == history_metrics);

  // One row per test window and step: 300 steps, n 3, T 1 gives 297 windows,
  // 237 train and a gap of 2.
  const auto pred = lines(test::read_text(dir / "pred.csv"));
  CHECK(pred.size() == 1 + 297 - 237 - 2);
  CHECK(pred.front() == "time,step,node_0,node_1,node_2,node_3,node_4,node_5");
  CHECK(sha256_file(dir / "speeds.csv") == speeds_hash);
}

TEST_CASE("eval contract errors") {
  test::TempDir dir("cli_eval_bad");
  REQUIRE(cli(small_train(dir.path(), "0")).code == exit_ok);
  const std::string ckpt = (dir / "checkpoint.txt").string();

  test::write_text(dir / "narrow.csv", "1,2,3\n4,5,6\n");
  const Run wrong_nodes = cli({"eval", "--checkpoint", ckpt, "--graph",
                               (dir / "adjacency.csv").string(), "--speeds",
                               (dir / "narrow.csv").string()});
  CHECK(wrong_nodes.code == exit_data);
  CHECK(wrong_nodes.err.find("3 nodes") != std::string::npos);

  test::write_text(dir / "k2.csv", "0,1\n1,0\n");
  const Run wrong_graph = cli({"eval", "--checkpoint", ckpt, "--graph", (dir / "k2.csv").string(),
                               "--speeds", (dir / "speeds.csv").string()});
  CHECK(wrong_graph.code == exit_config);

  CHECK(cli({"eval", "--checkpoint", (dir / "absent.txt").string(), "--synth", "6x300"}).code ==
        exit_data);
}

TEST_CASE("perturb sweeps") {
  test::TempDir dir("cli_perturb");
  REQUIRE(cli(small_train(dir.path(), "2")).code == exit_ok);
  const std::vector<std::string> base{"perturb", "--checkpoint", (dir / "checkpoint.txt").string(),
                                      "--graph", (dir / "adjacency.csv").string(), "--speeds",
                                      (dir / "speeds.csv").string(), "--seed", "3"};
  for (const std::string kind : {"gaussian", "poisson"}) {
    auto args = base;
    args.insert(args.end(), {"--kind", kind, "--out", (dir / (kind + "1.csv")).string()});
    REQUIRE(cli(args).code == exit_ok);
    const auto rows = lines(test::read_text(dir / (kind + "1.csv")));
    REQUIRE(rows.size() == 6);
    CHECK(rows[0] == "kind,param,rmse,mae,accuracy,r2,var");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].rfind(kind + ",", 0) == 0);
    }
    args.back() = (dir / (kind + "2.csv")).string();
    REQUIRE(cli(args).code == exit_ok);
    CHECK(test::read_text(dir / (kind + "1.csv")) == test::read_text(dir / (kind + "2.csv")));
  }
  auto bad = base;
  bad.insert(bad.end(), {"--kind", "uniform"});
  CHECK(cli(bad).code == exit_config);
  auto bad_unit = base;
  bad_unit.insert(bad_unit.end(), {"--kind", "gaussian", "--noise-unit", "mph"});
  CHECK(cli(bad_unit).code == exit_config);
}

TEST_CASE("gradcheck command") {
  const Run ok = cli({"gradcheck", "--trials", "2"});
  CHECK(ok.code == exit_ok);
  const Run one = cli({"gradcheck", "--trials", "1"});
  CHECK(one.code == exit_ok);
  std::size_t variant_rows = 0;
  for (const std::string& line : lines(one.out)) {
    std::istringstream row(line);
    std::string subject;
    std::string cases;
    row >> subject >> cases;
    if (subject == "gcn" || subject == "gru" || subject == "tgcn" || subject == "a3tgcn") {
      ++variant_rows;
      CHECK(cases == "1");
    }
  }
  CHECK(variant_rows == 4);

  const Run broken = cli({"gradcheck", "--trials", "2", "--fault", "matmul"});
  CHECK(broken.code == exit_failure);
  CHECK(broken.err.find("matmul") != std::string::npos);
  CHECK(cli({"gradcheck", "--fault", "nonsense"}).code == exit_config);
  // The fault must not leak into later runs.
  CHECK(cli({"gradcheck", "--trials", "1"}).code == exit_ok);
}

TEST_CASE("divergence exits with its own code") {
  test::TempDir dir("cli_nan");
  auto args = small_train(dir.path(), "2");
  args.insert(args.end(), {"--lr", "1e200"});
  const Run r = cli(args);
  CHECK(r.code == exit_diverged);
  CHECK(r.err.find("epoch 1") != std::string::npos);
}

TEST_CASE("config file and precedence") {
  test::TempDir dir("cli_cfg");
  test::write_text(dir / "run.cfg",
                   "# small run\n"
                   "synth = 6x300\n"
                   "model = tgcn\n"
                   "history = 3\n"
                   "hidden = 4\n"
                   "epochs = 4\n"
                   "eval-every = 2\n"
                   "seed = 5\n"
                   "lr = 0.5\n");
  // Flags given on the command line win over the file.
  REQUIRE(cli({"train", "--config", (dir / "run.cfg").string(), "--synth-seed", "2", "--lr",
               "0.001", "--out-dir", (dir / "a").string()})
              .code == exit_ok);
  REQUIRE(cli(small_train(dir / "b")).code == exit_ok);
  CHECK(test::read_text(dir / "a" / "history.csv") == test::read_text(dir / "b" / "history.csv"));

  test::write_text(dir / "broken.cfg", "epochs 4\n");
  CHECK(cli({"train", "--config", (dir / "broken.cfg").string(), "--out-dir", (dir / "c").string()})
            .code == exit_config);
  test::write_text(dir / "unknown.cfg", "color = red\n");
  CHECK(cli({"train", "--config", (dir / "unknown.cfg").string(), "--synth", "6x300", "--out-dir",
             (dir / "c").string()})
            .code == exit_config);
}

TEST_CASE("seed falls back to the environment") {
  test::TempDir dir("cli_env");
  auto args = small_train(dir / "env");
  const auto seed_at = std::find(args.begin(), args.end(), "--seed");
  args.erase(seed_at, seed_at + 2);
  ::setenv("A3T_SEED", "5", 1);
  const Run r = cli(args);
  ::unsetenv("A3T_SEED");
  REQUIRE(r.code == exit_ok);
  REQUIRE(cli(small_train(dir / "flag")).code == exit_ok);
  CHECK(test::read_text(dir / "env" / "history.csv") ==
        test::read_text(dir / "flag" / "history.csv"));
}

TEST_CASE("reruns are byte-identical") {
  test::TempDir dir("cli_rerun");
  REQUIRE(cli(small_train(dir / "x")).code == exit_ok);
  REQUIRE(cli(small_train(dir / "y")).code == exit_ok);
  for (const char* name : {"history.csv", "checkpoint.txt", "speeds.csv", "adjacency.csv"}) {
    CHECK(test::read_text(dir / "x" / name) == test::read_text(dir / "y" / name));
  }
}

TEST_CASE("compare command") {
  test::TempDir dir("cli_compare");
  const Run r = cli({"compare", "--synth", "6x300", "--models", "ha,gru", "--horizons", "1,2",
                     "--history", "3", "--hidden", "4", "--epochs", "2", "--out",
                     (dir / "cmp.csv").string()});
  REQUIRE(r.code == exit_ok);
  const auto rows = lines(test::read_text(dir / "cmp.csv"));
  CHECK(rows.size() == 1 + 2 * 5);
  CHECK(rows.front() == "horizon,metric,ha,gru");
}
