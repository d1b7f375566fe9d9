#pragma once

#include "forecaster/common.hpp"
#include "forecaster/env_maze.hpp"

#include <string>

namespace forecaster {

/// Every schedule constant, size, rate and seed of a run. Text form is flat
/// `key = value` lines; unknown keys are rejected.
struct AgentConfig {
  // Schedule.
  int k = 8;                         // goal interval
  int branching = 3;                 // X: candidate goals per tree node
  int depth = 2;                     // m: tree depth
  int abstract_period = 16;          // C
  int primitive_update_period = 16;
  bool planner_enabled = true;       // false: flat-manager baseline

  // Sizes.
  int latent_dim = 64;
  int hidden = 64;
  int code_factors = 4;
  int code_classes = 8;

  // Learning.
  Scalar gamma = 0.99;
  Scalar lr_world_model = 1e-3;
  Scalar lr_codec = 1e-3;
  Scalar lr_manager = 3e-4;
  Scalar lr_worker = 3e-4;
  Scalar lr_abstract = 1e-3;
  Scalar entropy_weight = 0.01;
  Scalar recon_weight = 1.0;
  Scalar dyn_weight = 1.0;
  Scalar reward_weight = 1.0;
  int horizon = 16;                  // H, imagination length
  int wm_batch = 16;
  int seq_len = 16;
  int imagination_starts = 32;
  int abstract_batch = 32;
  std::size_t primitive_capacity = 100000;
  std::size_t extended_capacity = 20000;

  // Run.
  std::uint64_t seed = 0;
  long long maze_seed = -1;          // -1: use `seed`
  MazeSize size = MazeSize::S;
  std::string maze_file;             // overrides generation when set
  int max_episode_steps = 0;         // 0: size default (400 S, 1000 M)
  long long total_env_steps = 10000;
  int eval_every = 1;                // metrics row every N completed episodes
  bool measure_plan_time = false;    // wall-clock column; off keeps CSVs reproducible
  bool stop_at_first_success = false;  // end the run after the first solved episode

  /// Throws ConfigError naming the offending key.
  void validate() const;

  std::uint64_t effective_maze_seed() const {
    return maze_seed < 0 ? seed : static_cast<std::uint64_t>(maze_seed);
  }
  int effective_max_episode_steps() const {
    return max_episode_steps > 0 ? max_episode_steps : default_max_episode_steps(size);
  }
  Scalar abstract_discount() const;  // gamma^K

  std::string to_text() const;
  static AgentConfig from_text(const std::string& text);
  static AgentConfig from_file(const std::string& path);

  /// Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);
};

MazeLayout make_layout(const AgentConfig& cfg);

}  // namespace forecaster
