#include "leapt/eval.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace leapt;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "leapt_cli_test";

// Runs the CLI with LEAPT_OUT pointing at the scratch root; returns the exit code.
int run(const std::string& args) {
  std::string cmd = "LEAPT_OUT='" + kRoot.string() + "' '" LEAPT_CLI_PATH "' " + args + " >'" +
                    (kRoot / "stdout.txt").string() + "' 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string last_output() { return slurp(kRoot / "stdout.txt"); }

int line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

struct Scratch {
  Scratch() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  ~Scratch() { fs::remove_all(kRoot); }
};

std::string path(const std::string& rel) { return "'" + (kRoot / rel).string() + "'"; }

}  // namespace

TEST_CASE("gen-data: counts, empty datasets and determinism") {
  Scratch s;
  REQUIRE(run("gen-data --domain false-belief --n 30 --len 5 --seed 1 --out " + path("a.jsonl")) == 0);
  REQUIRE(run("gen-data --domain false-belief --n 30 --len 5 --seed 1 --out " + path("b.jsonl")) == 0);
  CHECK(slurp(kRoot / "a.jsonl") == slurp(kRoot / "b.jsonl"));
  DatasetHeader h;
  auto data = read_dataset(kRoot / "a.jsonl", &h);
  CHECK(data.size() == 30);
  CHECK(h.count == 30);
  CHECK(h.horizon == 5);

  REQUIRE(run("gen-data --domain fetch-tool --n 0 --seed 1 --out " + path("empty.jsonl")) == 0);
  DatasetHeader eh;
  CHECK(read_dataset(kRoot / "empty.jsonl", &eh).empty());
  CHECK(eh.domain == "fetch-tool");

  REQUIRE(run("gen-data --domain table-assembly --n 2 --seed 3") == 0);
  CHECK(fs::exists(kRoot / "data" / "table-assembly_s3.jsonl"));
}

TEST_CASE("configuration errors exit with 1 before writing anything") {
  Scratch s;
  CHECK(run("gen-data --domain chess --n 2 --seed 1 --out " + path("x.jsonl")) == 1);
  CHECK(run("gen-data --domain false-belief --n 2 --out " + path("x.jsonl")) == 1);
  CHECK_FALSE(fs::exists(kRoot / "x.jsonl"));
  CHECK(run("gen-data --domain false-belief --n 2 --seed 1 --out /proc/leapt/x.jsonl") == 1);
  REQUIRE(run("gen-data --domain false-belief --n 4 --seed 1 --out " + path("fb.jsonl")) == 0);
  CHECK(run("train --domain false-belief --model leapt --seed 1 --obs-std -1 --data " + path("fb.jsonl") +
            " --checkpoint " + path("m/leapt.ckpt")) == 1);
  CHECK(run("train --domain false-belief --model lstm --seed 1 --data " + path("fb.jsonl") + " --checkpoint " +
            path("m/leapt.ckpt")) == 1);
  CHECK_FALSE(fs::exists(kRoot / "m"));
  // A dataset of another domain is a schema mismatch.
  CHECK(run("train --domain fetch-tool --model leapt --seed 1 --data " + path("fb.jsonl") + " --checkpoint " +
            path("m/leapt.ckpt")) == 1);
  CHECK_FALSE(fs::exists(kRoot / "m" / "leapt.ckpt"));
  CHECK(run("eval --domain false-belief --seeds 1 --models leapt --models-dir " + path("missing")) == 1);
}

TEST_CASE("divergence exits with 2") {
  Scratch s;
  REQUIRE(run("gen-data --domain false-belief --n 4 --seed 1 --out " + path("fb.jsonl")) == 0);
  CHECK(run("train --domain false-belief --model leapt --seed 1 --epochs 50 --lr 1e300 --perspective-epochs 1 "
            "--data " + path("fb.jsonl") + " --checkpoint " + path("m/leapt.ckpt")) == 2);
  CHECK(last_output().find("epoch") != std::string::npos);
}

TEST_CASE("train: flags override the config file; resume continues numbering") {
  Scratch s;
  REQUIRE(run("gen-data --domain fetch-tool --n 6 --seed 2 --out " + path("ft.jsonl")) == 0);
  {
    std::ofstream cfg(kRoot / "train.cfg");
    cfg << "# test config\nepochs = 3\nperspective-epochs = 1\ndata = " << (kRoot / "ft.jsonl").string() << "\n";
  }
  const std::string base = "train --config " + path("train.cfg") + " --domain fetch-tool --model leapt --seed 2 ";
  REQUIRE(run(base + "--checkpoint " + path("a.ckpt")) == 0);
  CHECK(line_count(kRoot / "a_loss.csv") == 1 + 3);
  CHECK(fs::exists(kRoot / "a_perspective.ckpt"));
  REQUIRE(run(base + "--epochs 2 --checkpoint " + path("b.ckpt")) == 0);
  CHECK(line_count(kRoot / "b_loss.csv") == 1 + 2);

  REQUIRE(run(base + "--epochs 2 --resume --checkpoint " + path("a.ckpt")) == 0);
  CHECK(load_model(kRoot / "a.ckpt")->epochs_trained() == 5);
  std::ifstream in(kRoot / "a_loss.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,loss,recon_x,recon_y,kl_s,kl_h");
  int expected = 1;
  while (std::getline(in, line)) CHECK(std::stoi(line.substr(0, line.find(','))) == expected++);
  CHECK(expected == 6);

  std::ofstream bad(kRoot / "bad.cfg");
  bad << "epocs = 3\n";
  bad.close();
  CHECK(run("train --config " + path("bad.cfg") + " --domain fetch-tool --model leapt --seed 2 --data " +
            path("ft.jsonl") + " --checkpoint " + path("c.ckpt")) == 1);
}

TEST_CASE("train: the deterministic baseline reproduces its loss csv") {
  Scratch s;
  REQUIRE(run("gen-data --domain table-assembly --n 4 --seed 3 --out " + path("ta.jsonl")) == 0);
  for (const char* name : {"x", "y"})
    REQUIRE(run("train --domain table-assembly --model baseline-d --seed 3 --epochs 3 --perspective-epochs 1 --data " +
                path("ta.jsonl") + " --checkpoint " + path(std::string(name) + ".ckpt")) == 0);
  CHECK(slurp(kRoot / "x_loss.csv") == slurp(kRoot / "y_loss.csv"));
  CHECK(slurp(kRoot / "x.ckpt") == slurp(kRoot / "y.ckpt"));
}

TEST_CASE("eval and report: metric blocks, metric filter, accuracy table") {
  Scratch s;
  REQUIRE(run("gen-data --domain false-belief --n 6 --seed 1") == 0);
  REQUIRE(run("gen-data --domain false-belief --n 6 --seed 2") == 0);
  const std::vector<std::string> models = {"leapt", "leapt-attn", "baseline-s", "baseline-d"};
  for (const auto& m : models)
    for (int seed : {1, 2})
      REQUIRE(run("train --domain false-belief --model " + m + " --seed " + std::to_string(seed) +
                  " --epochs 2 --perspective-epochs 1") == 0);
  const std::string small = " --episodes 2 --n 10 --n-outer 2 --n-inner 3";
  REQUIRE(run("eval --domain false-belief --seeds 1,2" + small) == 0);
  const fs::path eval_dir = kRoot / "eval" / "false-belief";
  auto rows = read_metrics_csv(eval_dir / "metrics.csv");
  const int T = FalseBelief().schema().horizon;
  CHECK(rows.size() == models.size() * 2 * 2 * T * kMetricNames.size());
  std::set<std::pair<std::string, std::uint64_t>> blocks;
  for (const auto& r : rows) blocks.insert({r.model, r.seed});
  CHECK(blocks.size() == models.size() * 2);
  CHECK(line_count(eval_dir / "accuracy.csv") == 1 + static_cast<int>(models.size()) * 2 * 2);
  CHECK(slurp(eval_dir / "accuracy.csv").rfind("model,seed,switched,accuracy", 0) == 0);
  CHECK(last_output().find("switched") != std::string::npos);
  for (const auto& f : fs::directory_iterator(eval_dir / "plots")) CHECK(fs::file_size(f.path()) > 0);

  const std::string first = slurp(eval_dir / "metrics.csv");
  REQUIRE(run("eval --domain false-belief --seeds 1,2 --jobs 2" + small) == 0);
  CHECK(slurp(eval_dir / "metrics.csv") == first);

  REQUIRE(run("eval --domain false-belief --seeds 1 --models leapt --metric cond_kl --out " + path("only") + small) == 0);
  auto only = read_metrics_csv(kRoot / "only" / "metrics.csv");
  CHECK(only.size() == static_cast<std::size_t>(2 * T));
  for (const auto& r : only) CHECK(r.metric == "cond_kl");
  CHECK(run("eval --domain false-belief --seeds 1 --models leapt --metric accuracy --out " + path("bad") + small) == 1);
  CHECK_FALSE(fs::exists(kRoot / "bad"));

  REQUIRE(run("report") == 0);
  CHECK(fs::exists(kRoot / "report" / "summary.csv"));
  CHECK(line_count(kRoot / "report" / "summary.csv") == 1 + static_cast<int>(models.size() * kMetricNames.size()));
}
