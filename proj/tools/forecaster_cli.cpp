// forecaster: train, transfer, eval, plan-debug and aggregate from the shell.
#include "forecaster/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace forecaster;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// "3", "0,1,5" or "0-9" (inclusive), combinable: "0-4,10".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw UsageError("seed range '" + item + "' is empty");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw UsageError("cannot parse seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw UsageError("--seeds must list at least one seed");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw UsageError("--seeds contains duplicates");
  return seeds;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "never";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

struct TrainOptions {
  std::string config;
  std::string seeds = "0";
  std::string out = "runs";
  bool baseline = false;
  int x = 0;
  int m = 0;
  std::string checkpoint;
  std::string load_components = "all";
  int workers = default_workers();
};

int cmd_train(const TrainOptions& o) {
  AgentConfig cfg = AgentConfig::from_file(o.config);
  if (o.baseline) {
    if (o.x > 0 || o.m > 0) std::cerr << "notice: --baseline runs without the planner; --X/--m ignored\n";
  } else {
    if (o.x > 0) cfg.branching = o.x;
    if (o.m > 0) cfg.depth = o.m;
  }
  cfg.validate();
  const auto seeds = parse_seeds(o.seeds);
  ensure_dir(o.out);
  std::optional<std::set<std::string>> components;
  if (!o.checkpoint.empty()) components = parse_component_list(o.load_components);

  const auto runs = run_seeds(seeds, o.workers, [&](std::uint64_t seed) {
    AgentConfig c = cfg;
    c.seed = seed;
    if (o.baseline) c.planner_enabled = false;
    Trainer trainer(c);
    if (components) load_checkpoint(trainer.agent(), o.checkpoint, *components);
    std::ostringstream csv;
    SeedRun run;
    run.seed = seed;
    run.summary = trainer.run(&csv);
    run.csv = csv.str();
    save_checkpoint(trainer.agent(), join(o.out, "checkpoint_" + std::to_string(seed) + ".bin"),
                    static_cast<std::uint64_t>(trainer.env_steps()));
    return run;
  });
  for (const auto& run : runs) {
    write_file(join(o.out, "run_" + std::to_string(run.seed) + ".csv"), run.csv);
    const auto& s = run.summary;
    std::cout << "seed " << run.seed << " episodes " << s.episodes.size() << " first_success_step "
              << (s.steps_to_first_success ? std::to_string(*s.steps_to_first_success) : "never")
              << " final_success_rate " << s.final_success_rate << '\n';
  }
  return 0;
}

struct TransferOptions {
  std::string config;
  std::string finetune_config;
  std::string arms = "full,no_abstract,scratch";
  std::string seeds = "0";
  std::string out = "transfer";
  int workers = default_workers();
};

int cmd_transfer(const TransferOptions& o) {
  const AgentConfig pre = AgentConfig::from_file(o.config);
  const AgentConfig fine = AgentConfig::from_file(o.finetune_config);
  pre.validate();
  fine.validate();
  std::vector<TransferArm> arms;
  {
    std::istringstream in(o.arms);
    std::string item;
    while (std::getline(in, item, ','))
      if (!item.empty()) arms.push_back(parse_transfer_arm(item));
  }
  if (arms.empty()) throw UsageError("--arms must name at least one arm");
  const auto seeds = parse_seeds(o.seeds);
  ensure_dir(o.out);

  // Each job writes only its own slot.
  std::vector<std::vector<SeedRun>> per_seed(seeds.size());
  run_seeds(seeds, o.workers, [&](std::uint64_t seed) {
    const auto slot = static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
    per_seed[slot] = transfer_seed(pre, fine, arms, seed);
    return SeedRun{};
  });

  std::ostringstream summary;
  summary << "arm\tmedian_episodes_to_first_success\tsolved\truns\n";
  std::vector<std::vector<std::optional<long long>>> firsts(arms.size());
  for (const auto& runs : per_seed) {
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const auto& run = runs[a];
      write_file(join(o.out, to_string(arms[a]) + "_run_" + std::to_string(run.seed) + ".csv"), run.csv);
      firsts[a].push_back(episodes_to_first_success(parse_metrics_csv(run.csv)));
    }
  }
  for (std::size_t a = 0; a < arms.size(); ++a) {
    const auto solved = std::count_if(firsts[a].begin(), firsts[a].end(), [](const auto& v) { return v.has_value(); });
    summary << to_string(arms[a]) << '\t' << format_optional(censored_median(firsts[a])) << '\t' << solved << '\t'
            << firsts[a].size() << '\n';
  }
  write_file(join(o.out, "summary.tsv"), summary.str());
  std::cout << summary.str();
  return 0;
}

struct EvalOptions {
  std::string checkpoint;
  std::string config;
  std::string load_components = "all";
  int episodes = 10;
  std::string seeds = "0";
};

AgentConfig config_for_checkpoint(const std::string& checkpoint, const std::string& override_path) {
  if (!override_path.empty()) return AgentConfig::from_file(override_path);
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + checkpoint + "'");
  return AgentConfig::from_text(read_checkpoint_info(in).config_text);
}

int cmd_eval(const EvalOptions& o) {
  if (o.episodes <= 0) throw UsageError("--episodes must be positive");
  const AgentConfig cfg = config_for_checkpoint(o.checkpoint, o.config);
  const auto seeds = parse_seeds(o.seeds);
  Agent agent(cfg);
  load_checkpoint(agent, o.checkpoint, parse_component_list(o.load_components));
  for (const auto seed : seeds) {
    const EvalResult r = evaluate(agent, cfg, o.episodes, seed);
    std::cout << "seed " << seed << " episodes " << r.episodes << " success_rate " << r.success_rate
              << " mean_episode_length " << r.mean_episode_length << '\n';
  }
  return 0;
}

struct PlanDebugOptions {
  std::string checkpoint;
  std::string config;
  std::uint64_t env_seed = 0;
  int x = 3;
  int m = 2;
};

int cmd_plan_debug(const PlanDebugOptions& o) {
  AgentConfig cfg = config_for_checkpoint(o.checkpoint, o.config);
  cfg.maze_seed = static_cast<long long>(o.env_seed);
  Agent agent(cfg);
  load_checkpoint(agent, o.checkpoint, parse_component_list("all"));
  MazeEnv env(make_layout(cfg), cfg.effective_max_episode_steps());
  const Vector root = agent.world_model.encode_initial(env.reset());
  const PlannerSettings settings{o.x, o.m, cfg.abstract_discount(), false};
  const PlanNode tree = build_tree(agent.planner_models(), root, settings, substream(o.env_seed, "plan-debug")());
  std::cout << dump_tree(tree, settings);
  return 0;
}

struct AggregateOptions {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_aggregate(const AggregateOptions& o) {
  std::vector<std::vector<MetricsRow>> runs;
  for (const auto& path : o.inputs) runs.push_back(parse_metrics_csv(read_file(path)));
  const std::string text = aggregate_runs(runs);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(o.out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forecaster: hierarchical agent with a temporally abstract world model"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "train on one maze per seed, one metrics CSV per seed");
  t->add_option("--config", train.config, "config file (key = value)")->required();
  t->add_option("--seeds", train.seeds, "seed list, e.g. 0,1,2 or 0-9");
  t->add_option("--out", train.out, "output directory");
  t->add_flag("--baseline", train.baseline, "flat manager: no planner");
  t->add_option("--X", train.x, "override branching");
  t->add_option("--m", train.m, "override tree depth");
  t->add_option("--checkpoint", train.checkpoint, "initialize from this checkpoint");
  t->add_option("--load-components", train.load_components, "components to load (comma list or all)");
  t->add_option("--workers", train.workers, "parallel seeds");

  TransferOptions transfer;
  auto* tr = app.add_subcommand("transfer", "pretrain on one config, fine-tune each arm on another");
  tr->add_option("--config", transfer.config, "pretraining config")->required();
  tr->add_option("--finetune-config", transfer.finetune_config, "fine-tuning config")->required();
  tr->add_option("--arms", transfer.arms, "comma list of full, no_abstract, scratch");
  tr->add_option("--seeds", transfer.seeds, "seed list");
  tr->add_option("--out", transfer.out, "output directory");
  tr->add_option("--workers", transfer.workers, "parallel seeds");

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "greedy rollouts from a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--config", eval.config, "environment config (default: the checkpoint's own)");
  e->add_option("--load-components", eval.load_components, "components to load");
  e->add_option("--episodes", eval.episodes, "episodes per seed");
  e->add_option("--seeds", eval.seeds, "seed list");

  PlanDebugOptions plan;
  auto* p = app.add_subcommand("plan-debug", "print the planning tree at the initial state");
  p->add_option("--checkpoint", plan.checkpoint, "checkpoint file")->required();
  p->add_option("--config", plan.config, "config (default: the checkpoint's own)");
  p->add_option("--env-seed", plan.env_seed, "maze seed");
  p->add_option("--X", plan.x, "branching");
  p->add_option("--m", plan.m, "depth");

  AggregateOptions aggregate;
  auto* a = app.add_subcommand("aggregate", "mean and stderr across metrics CSVs (gnuplot columns)");
  a->add_option("inputs", aggregate.inputs, "metrics CSV files")->required();
  a->add_option("--out", aggregate.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (tr->parsed()) return cmd_transfer(transfer);
    if (e->parsed()) return cmd_eval(eval);
    if (p->parsed()) return cmd_plan_debug(plan);
    if (a->parsed()) return cmd_aggregate(aggregate);
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
