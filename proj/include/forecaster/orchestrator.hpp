#pragma once

#include "forecaster/abstract_wm.hpp"
#include "forecaster/config.hpp"
#include "forecaster/env_maze.hpp"
#include "forecaster/goal_codec.hpp"
#include "forecaster/hierarchy.hpp"
#include "forecaster/planner.hpp"
#include "forecaster/replay.hpp"
#include "forecaster/world_model.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace forecaster {

/// All learned components of one agent. Each component is initialized from
/// its own seed substream so loading one leaves the others' draws unchanged.
struct Agent {
  explicit Agent(const AgentConfig& cfg);

  AgentConfig config;
  WorldModel world_model;
  GoalCodec codec;
  Manager manager;
  Worker worker;
  AbstractWorldModel abstract_model;

  PlannerModels planner_models() const { return {manager, codec, abstract_model}; }
  ImaginationModels imagination_models() const { return {world_model, codec, manager, worker}; }
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'S', 'T', 'C', 'K', 'P', 'T'};
inline const std::array<std::string, 5> kComponentNames = {"world_model", "goal_codec", "manager", "worker",
                                                          "abstract_wm"};

ParameterSet component_parameters(const Agent& agent, const std::string& name);
void set_component_parameters(Agent& agent, const std::string& name, const ParameterSet& params);

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t env_steps = 0;
  std::string config_text;
  std::vector<std::string> components;
};

/// Layout (little-endian): magic "FCSTCKPT", u32 version, u64 env steps,
/// string config snapshot, u32 component count, component names, then one
/// ParameterSet payload per component in the listed order. Strings are u32
/// length + bytes.
void save_checkpoint(const Agent& agent, std::ostream& out, std::uint64_t env_steps);
void save_checkpoint(const Agent& agent, const std::string& path, std::uint64_t env_steps);

/// Restores exactly the named components (values cast back from float32);
/// every other component keeps its current parameters. Throws LoadError on
/// version mismatch, unknown or missing component, or shape mismatch.
CheckpointInfo load_checkpoint(Agent& agent, std::istream& in, const std::set<std::string>& components);
CheckpointInfo load_checkpoint(Agent& agent, const std::string& path, const std::set<std::string>& components);
CheckpointInfo read_checkpoint_info(std::istream& in);

std::set<std::string> parse_component_list(const std::string& csv);

// ---------------------------------------------------------------------------
// Training loop

inline const char* const kMetricsHeader =
    "step,episode,episode_return,success,wm_recon_loss,wm_dyn_loss,wm_rew_loss,codec_loss,"
    "abstract_latent_mse,abstract_rew_mse,manager_pg,worker_pg,plan_time_us";

struct MetricsRow {
  long long step = 0;
  long long episode = 0;
  Scalar episode_return = 0.0;
  bool success = false;
  Scalar wm_recon_loss = 0.0;
  Scalar wm_dyn_loss = 0.0;
  Scalar wm_rew_loss = 0.0;
  Scalar codec_loss = 0.0;
  Scalar abstract_latent_mse = 0.0;
  Scalar abstract_rew_mse = 0.0;
  Scalar manager_pg = 0.0;
  Scalar worker_pg = 0.0;
  long long plan_time_us = 0;
};

std::string format_metrics_row(const MetricsRow& row);

struct ScheduleCounters {
  long long planner_calls = 0;
  long long abstract_update_attempts = 0;
  long long abstract_updates = 0;
  long long primitive_update_attempts = 0;
  long long primitive_updates = 0;
  long long extended_pushes = 0;
  long long segments_discarded = 0;
};

struct EpisodeRecord {
  long long end_step = 0;  // env steps completed when the episode ended
  long long episode = 0;   // 1-based
  Scalar episode_return = 0.0;
  bool success = false;
  int length = 0;
};

struct TrainingSummary {
  ScheduleCounters counters;
  std::vector<EpisodeRecord> episodes;
  std::optional<long long> episodes_to_first_success;
  std::optional<long long> steps_to_first_success;
  /// Success fraction over episodes ending in the last 20% of the budget.
  Scalar final_success_rate = 0.0;
  long long env_steps = 0;
};

/// One step of the event log that tests use to audit the schedule.
struct StepTrace {
  long long t = 0;
  int episode_step = 0;
  bool planned = false;
  bool extended_push = false;
  bool abstract_attempt = false;
  bool primitive_attempt = false;
  std::vector<int> goal_code;
};

/// Environment interaction plus the update schedule: goal choice every K
/// episode steps, extended push when a K-step segment completes, abstract
/// update when t % C == 0, primitive/codec/manager/worker updates when
/// t % primitive_update_period == 0.
class Trainer {
 public:
  explicit Trainer(const AgentConfig& cfg);

  Agent& agent() { return agent_; }
  const Agent& agent() const { return agent_; }

  /// One environment step.
  void step();
  /// Runs until total_env_steps, writing metrics rows (with header) to `csv`.
  TrainingSummary run(std::ostream* csv);

  long long env_steps() const { return t_; }
  const ScheduleCounters& counters() const { return counters_; }
  const PrimitiveBuffer& primitive_buffer() const { return primitive_; }
  const ExtendedBuffer& extended_buffer() const { return extended_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  const MazeEnv& env() const { return env_; }

  void set_trace(std::vector<StepTrace>* trace) { trace_ = trace; }
  void set_metrics_sink(std::ostream* csv) { csv_ = csv; }

  TrainingSummary summary() const;

 private:
  void choose_goal(const Vector& latent, const Observation& obs);
  void update_abstract();
  void update_primitive();
  void finish_episode(bool success);

  AgentConfig cfg_;
  Agent agent_;
  MazeEnv env_;
  PrimitiveBuffer primitive_;
  ExtendedBuffer extended_;

  Rng act_rng_;
  Rng manager_rng_;
  Rng planner_rng_;
  Rng buffer_rng_;
  Rng codec_rng_;
  Rng imagination_rng_;

  long long t_ = 0;
  std::uint64_t episode_ = 0;
  int episode_step_ = 0;
  Observation obs_;
  Vector prev_latent_;
  int prev_action_ = kNullAction;
  Scalar episode_return_ = 0.0;

  GoalCode goal_code_;
  Vector goal_;
  Observation segment_start_;
  Scalar segment_reward_ = 0.0;
  int segment_start_step_ = 0;

  MetricsRow latest_;
  long long last_plan_time_us_ = 0;
  ScheduleCounters counters_;
  std::vector<EpisodeRecord> episodes_;
  std::vector<StepTrace>* trace_ = nullptr;
  std::ostream* csv_ = nullptr;
};

TrainingSummary run_training(const AgentConfig& cfg, std::ostream* csv);

// ---------------------------------------------------------------------------
// Transfer

enum class TransferArm { full, no_abstract, scratch };

TransferArm parse_transfer_arm(const std::string& s);
std::string to_string(TransferArm arm);
std::set<std::string> transfer_components(TransferArm arm);

/// Trains on `cfg` and returns the checkpoint bytes.
std::string pretrain(const AgentConfig& cfg, std::ostream* csv = nullptr);

/// Fresh agent from `cfg`, arm components loaded from `checkpoint`, fresh
/// buffers, then training. The scratch arm never reads the checkpoint.
TrainingSummary finetune(const AgentConfig& cfg, const std::string& checkpoint, TransferArm arm,
                         std::ostream* csv);

TrainingSummary run_transfer(const AgentConfig& pretrain_cfg, const AgentConfig& finetune_cfg, TransferArm arm,
                             std::ostream* csv);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  Scalar success_rate = 0.0;
  Scalar mean_episode_length = 0.0;
  int episodes = 0;
};

/// Greedy rollouts (argmax worker actions; argmax manager goal when the
/// planner is disabled) on the layout built from `cfg`.
EvalResult evaluate(const Agent& agent, const AgentConfig& cfg, int episodes, std::uint64_t seed);

/// Goal choice shared by training and evaluation.
std::pair<GoalCode, Vector> choose_goal(const Agent& agent, const Vector& latent, bool planner_enabled,
                                        Rng& manager_rng, Rng& planner_rng, bool greedy_manager,
                                        std::size_t* abstract_calls = nullptr);

}  // namespace forecaster
