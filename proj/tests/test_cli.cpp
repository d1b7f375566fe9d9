#include "forecaster/experiment.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>

namespace fs = std::filesystem;
using namespace forecaster;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

// Scratch directory per test case, removed on exit.
struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name)
      : path(fs::temp_directory_path() / ("forecaster_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

Result run_cli(const Workdir& dir, const std::string& args) {
  const std::string out = dir / "stdout.txt";
  const std::string err = dir / "stderr.txt";
  const std::string cmd = std::string(FORECASTER_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string tiny_config(const std::string& extra = "") {
  return "latent_dim = 6\nhidden = 8\ncode_factors = 2\ncode_classes = 3\n"
         "wm_batch = 4\nseq_len = 8\nimagination_starts = 4\nabstract_batch = 4\n"
         "max_episode_steps = 40\ntotal_env_steps = 240\n" + extra;
}

// Independent recomputation of the summary median: lower/upper middle of the
// sorted first-success episodes, "never" sorting last.
std::string recompute_median(const std::vector<std::string>& csv_paths) {
  std::vector<long long> values;
  for (const auto& path : csv_paths) {
    long long first = -1;
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      std::string x;
      while (std::getline(ls, x, ',')) f.push_back(x);
      if (f.at(3) == "1") {
        first = std::stoll(f.at(1));
        break;
      }
    }
    values.push_back(first < 0 ? std::numeric_limits<long long>::max() : first);
  }
  std::sort(values.begin(), values.end());
  const auto lo = values[(values.size() - 1) / 2];
  const auto hi = values[values.size() / 2];
  if (hi == std::numeric_limits<long long>::max()) return "never";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", 0.5 * (static_cast<double>(lo) + static_cast<double>(hi)));
  return buf;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing config file: exit 2 naming the path") {
    Workdir dir("missing");
    const auto r = run_cli(dir, "train --config " + (dir / "nope.cfg") + " --out " + (dir / "out"));
    CHECK(r.code == 2);
    CHECK(r.err.find(dir / "nope.cfg") != std::string::npos);
  }

  TEST_CASE("usage errors exit 2") {
    Workdir dir("usage");
    CHECK(run_cli(dir, "").code == 2);
    CHECK(run_cli(dir, "frobnicate").code == 2);
    write_file(dir / "c.cfg", tiny_config());
    CHECK(run_cli(dir, "train --config " + (dir / "c.cfg") + " --seeds 1,1 --out " + (dir / "o")).code == 2);
    write_file(dir / "bad.cfg", "K = 3\n");  // does not divide the horizon
    CHECK(run_cli(dir, "train --config " + (dir / "bad.cfg") + " --out " + (dir / "o")).code == 2);
  }

  TEST_CASE("train: one schema-conformant CSV per seed, byte-identical on rerun") {
    Workdir dir("train");
    write_file(dir / "c.cfg", tiny_config());
    const std::string args = "train --config " + (dir / "c.cfg") + " --seeds 0,1 --workers 2 --out ";
    REQUIRE(run_cli(dir, args + (dir / "a")).code == 0);
    REQUIRE(run_cli(dir, args + (dir / "b")).code == 0);
    for (const std::string name : {"run_0.csv", "run_1.csv"}) {
      const std::string a = read_file(dir / ("a/" + name));
      CHECK(a == read_file(dir / ("b/" + name)));
      CHECK(a.substr(0, a.find('\n')) == kMetricsHeader);
      CHECK_NOTHROW(parse_metrics_csv(a));
    }
    CHECK(read_file(dir / "a/run_0.csv") != read_file(dir / "a/run_1.csv"));
    CHECK(fs::exists(dir / "a/checkpoint_0.bin"));
  }

  TEST_CASE("train --baseline with X/m logs a notice") {
    Workdir dir("baseline");
    write_file(dir / "c.cfg", tiny_config());
    const auto r = run_cli(dir, "train --config " + (dir / "c.cfg") + " --baseline --X 5 --m 3 --out " + (dir / "o"));
    CHECK(r.code == 0);
    CHECK(r.err.find("ignored") != std::string::npos);
    CHECK(fs::exists(dir / "o/run_0.csv"));
  }

  TEST_CASE("transfer: summary rows per arm, medians recompute from the CSVs") {
    Workdir dir("transfer");
    write_file(dir / "pre.cfg", tiny_config("total_env_steps = 120\n"));
    write_file(dir / "fine.cfg", tiny_config("size = M\nmax_episode_steps = 20\n"));
    const auto r = run_cli(dir, "transfer --config " + (dir / "pre.cfg") + " --finetune-config " + (dir / "fine.cfg") +
                                    " --arms full,scratch --seeds 0-2 --out " + (dir / "o"));
    REQUIRE(r.code == 0);
    std::istringstream in(read_file(dir / "o/summary.tsv"));
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::string> medians;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string arm, median;
      ls >> arm >> median;
      medians[arm] = median;
    }
    CHECK(medians.size() == 2);
    for (const std::string arm : {"full", "scratch"}) {
      std::vector<std::string> paths;
      for (int s = 0; s < 3; ++s) paths.push_back(dir / ("o/" + arm + "_run_" + std::to_string(s) + ".csv"));
      CHECK(medians[arm] == recompute_median(paths));
    }
  }

  TEST_CASE("transfer: scratch-only never needs a pretraining run") {
    Workdir dir("scratch");
    write_file(dir / "fine.cfg", tiny_config("size = M\n"));
    // This pretraining budget would not finish within the test timeout.
    write_file(dir / "pre.cfg", tiny_config("total_env_steps = 1000000000\n"));
    const auto r = run_cli(dir, "transfer --config " + (dir / "pre.cfg") + " --finetune-config " + (dir / "fine.cfg") +
                                    " --arms scratch --out " + (dir / "o"));
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
  }

  TEST_CASE("plan-debug: X=1 m=1 prints one edge; output is parseable and repeatable") {
    Workdir dir("plan");
    write_file(dir / "c.cfg", tiny_config("total_env_steps = 64\n"));
    REQUIRE(run_cli(dir, "train --config " + (dir / "c.cfg") + " --out " + (dir / "o")).code == 0);
    const std::string args = "plan-debug --checkpoint " + (dir / "o/checkpoint_0.bin") + " --env-seed 4";
    const auto one = run_cli(dir, args + " --X 1 --m 1");
    REQUIRE(one.code == 0);
    CHECK(parse_dump_edges(one.out).size() == 1);
    const auto a = run_cli(dir, args + " --X 3 --m 2");
    const auto b = run_cli(dir, args + " --X 3 --m 2");
    CHECK(a.out == b.out);
    const auto edges = parse_dump_edges(a.out);
    CHECK(edges.size() == 12);
    CHECK(std::count_if(edges.begin(), edges.end(), [](const DumpedEdge& e) { return e.depth == 1; }) == 3);
  }

  TEST_CASE("eval: zero episodes is a usage error; scripted corridor checkpoint scores 1.0") {
    Workdir dir("eval");
    write_file(dir / "corridor.txt", "###\n#G#\n#.#\n#.#\n#.#\n#S#\n###\n");
    AgentConfig cfg = AgentConfig::from_text(tiny_config());
    cfg.maze_file = dir / "corridor.txt";
    Agent agent(cfg);
    agent.worker.net.set_zero();
    agent.worker.net.params().at("b1").data[kForward] = 1.0;
    save_checkpoint(agent, dir / "scripted.bin", 0);

    CHECK(run_cli(dir, "eval --checkpoint " + (dir / "scripted.bin") + " --episodes 0").code == 2);
    const auto r = run_cli(dir, "eval --checkpoint " + (dir / "scripted.bin") + " --episodes 5 --seeds 0,1");
    REQUIRE(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
    CHECK(r.out.find("success_rate 1 ") != std::string::npos);
    CHECK(r.out.find("success_rate 0") == std::string::npos);
    CHECK(run_cli(dir, "eval --checkpoint " + (dir / "missing.bin")).code == 3);
  }

  TEST_CASE("aggregate: gnuplot columns across runs; malformed input exits 3") {
    Workdir dir("aggregate");
    const std::string header = std::string(kMetricsHeader) + "\n";
    write_file(dir / "a.csv", header + "10,1,1,1,0,0,0,0,0,0,0,0,0\n");
    write_file(dir / "b.csv", header + "12,1,0,0,0,0,0,0,0,0,0,0,0\n");
    const auto r = run_cli(dir, "aggregate " + (dir / "a.csv") + " " + (dir / "b.csv"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("1 0.5 0.5 0.5 0.5 2") != std::string::npos);
    write_file(dir / "bad.csv", "step,episode\n");
    CHECK(run_cli(dir, "aggregate " + (dir / "bad.csv")).code == 3);
  }
}
