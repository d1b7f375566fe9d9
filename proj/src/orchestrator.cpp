#include "forecaster/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace forecaster {

Agent::Agent(const AgentConfig& cfg)
    : config((cfg.validate(), cfg)),
      world_model([&] {
        Rng r = substream(cfg.seed, "init/world_model");
        return WorldModel(cfg, r);
      }()),
      codec([&] {
        Rng r = substream(cfg.seed, "init/goal_codec");
        return GoalCodec(cfg, r);
      }()),
      manager([&] {
        Rng r = substream(cfg.seed, "init/manager");
        return Manager(cfg, r);
      }()),
      worker([&] {
        Rng r = substream(cfg.seed, "init/worker");
        return Worker(cfg, r);
      }()),
      abstract_model([&] {
        Rng r = substream(cfg.seed, "init/abstract_wm");
        return AbstractWorldModel(cfg, r);
      }()) {}

// ---------------------------------------------------------------------------
// Checkpoints

ParameterSet component_parameters(const Agent& agent, const std::string& name) {
  if (name == "world_model") return agent.world_model.joint_parameters();
  if (name == "goal_codec") return agent.codec.joint_parameters();
  if (name == "manager") return merge_parameters("manager", {{"net", &agent.manager.net}});
  if (name == "worker") return merge_parameters("worker", {{"net", &agent.worker.net}});
  if (name == "abstract_wm") return agent.abstract_model.joint_parameters();
  throw LoadError("unknown component '" + name + "'");
}

void set_component_parameters(Agent& agent, const std::string& name, const ParameterSet& params) {
  if (name == "world_model") {
    agent.world_model.set_joint_parameters(params);
  } else if (name == "goal_codec") {
    agent.codec.set_joint_parameters(params);
  } else if (name == "manager") {
    split_parameters(params, {{"net", &agent.manager.net}});
  } else if (name == "worker") {
    split_parameters(params, {{"net", &agent.worker.net}});
  } else if (name == "abstract_wm") {
    agent.abstract_model.set_joint_parameters(params);
  } else {
    throw LoadError("unknown component '" + name + "'");
  }
}

void save_checkpoint(const Agent& agent, std::ostream& out, std::uint64_t env_steps) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  io::write_u32(out, kCheckpointVersion);
  io::write_u64(out, env_steps);
  io::write_string(out, agent.config.to_text());
  io::write_u32(out, static_cast<std::uint32_t>(kComponentNames.size()));
  for (const auto& name : kComponentNames) io::write_string(out, name);
  for (const auto& name : kComponentNames) write_parameter_set(out, component_parameters(agent, name));
  if (!out) throw LoadError("failed writing checkpoint");
}

void save_checkpoint(const Agent& agent, const std::string& path, std::uint64_t env_steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open checkpoint '" + path + "' for writing");
  save_checkpoint(agent, out, env_steps);
}

CheckpointInfo read_checkpoint_info(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (in.gcount() != static_cast<std::streamsize>(sizeof magic) ||
      std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw LoadError("not a checkpoint file (bad magic)");
  }
  CheckpointInfo info;
  info.version = io::read_u32(in);
  if (info.version != kCheckpointVersion) {
    throw LoadError("checkpoint version " + std::to_string(info.version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  info.env_steps = io::read_u64(in);
  info.config_text = io::read_string(in);
  const auto n = io::read_u32(in);
  if (n > kComponentNames.size()) throw LoadError("checkpoint lists too many components");
  for (std::uint32_t i = 0; i < n; ++i) {
    info.components.push_back(io::read_string(in));
    if (std::find(kComponentNames.begin(), kComponentNames.end(), info.components.back()) == kComponentNames.end()) {
      throw LoadError("checkpoint contains unknown component '" + info.components.back() + "'");
    }
  }
  return info;
}

CheckpointInfo load_checkpoint(Agent& agent, std::istream& in, const std::set<std::string>& components) {
  for (const auto& name : components) {
    if (std::find(kComponentNames.begin(), kComponentNames.end(), name) == kComponentNames.end()) {
      throw LoadError("unknown component '" + name + "'");
    }
  }
  CheckpointInfo info = read_checkpoint_info(in);
  for (const auto& name : components) {
    if (std::find(info.components.begin(), info.components.end(), name) == info.components.end()) {
      throw LoadError("component '" + name + "' is not present in the checkpoint");
    }
  }
  // Parse everything first so a failure leaves the agent untouched.
  std::vector<std::pair<std::string, ParameterSet>> staged;
  for (const auto& name : info.components) {
    ParameterSet params = read_parameter_set(in);
    if (params.name() != name) {
      throw LoadError("component '" + name + "' payload is labelled '" + params.name() + "'");
    }
    if (components.count(name)) staged.emplace_back(name, std::move(params));
  }
  Agent trial = agent;
  for (const auto& [name, params] : staged) set_component_parameters(trial, name, params);
  agent = std::move(trial);
  return info;
}

CheckpointInfo load_checkpoint(Agent& agent, const std::string& path, const std::set<std::string>& components) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(agent, in, components);
}

std::set<std::string> parse_component_list(const std::string& csv) {
  std::set<std::string> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      out.insert(kComponentNames.begin(), kComponentNames.end());
      continue;
    }
    if (std::find(kComponentNames.begin(), kComponentNames.end(), item) == kComponentNames.end()) {
      throw LoadError("unknown component '" + item + "'");
    }
    out.insert(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::string format_metrics_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%lld,%.6g,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%lld", r.step, r.episode,
                r.episode_return, r.success ? 1 : 0, r.wm_recon_loss, r.wm_dyn_loss, r.wm_rew_loss, r.codec_loss,
                r.abstract_latent_mse, r.abstract_rew_mse, r.manager_pg, r.worker_pg, r.plan_time_us);
  return buf;
}

// ---------------------------------------------------------------------------
// Goal choice

std::pair<GoalCode, Vector> choose_goal(const Agent& agent, const Vector& latent, bool planner_enabled,
                                        Rng& manager_rng, Rng& planner_rng, bool greedy_manager,
                                        std::size_t* abstract_calls) {
  if (!planner_enabled) {
    GoalCode code = agent.manager.sample(latent, greedy_manager ? nullptr : &manager_rng);
    Vector goal = agent.codec.decode_goal(code);
    return {std::move(code), std::move(goal)};
  }
  const PlannerSettings settings{agent.config.branching, agent.config.depth, agent.config.abstract_discount(), false};
  const PlanNode root = build_tree(agent.planner_models(), latent, settings, planner_rng(), abstract_calls);
  return select_goal(enumerate_paths(root, settings.discount));
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const AgentConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      agent_(cfg),
      env_(make_layout(cfg), cfg.effective_max_episode_steps()),
      primitive_(cfg.primitive_capacity),
      extended_(cfg.extended_capacity, cfg.k),
      act_rng_(substream(cfg.seed, "act")),
      manager_rng_(substream(cfg.seed, "manager-sampling")),
      planner_rng_(substream(cfg.seed, "planner")),
      buffer_rng_(substream(cfg.seed, "buffers")),
      codec_rng_(substream(cfg.seed, "codec")),
      imagination_rng_(substream(cfg.seed, "imagination")) {
  obs_ = env_.reset();
  prev_latent_ = Vector::Zero(cfg.latent_dim);
}

void Trainer::choose_goal(const Vector& latent, const Observation& obs) {
  (void)latent;
  // Goal selection works from the episode-start style encoding of the
  // current observation: the latent space the abstract model is trained in.
  const Vector root = agent_.world_model.encode_initial(obs);
  const auto start = std::chrono::steady_clock::now();
  auto [code, goal] =
      forecaster::choose_goal(agent_, root, cfg_.planner_enabled, manager_rng_, planner_rng_, false);
  if (cfg_.measure_plan_time) {
    last_plan_time_us_ =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
  }
  goal_code_ = std::move(code);
  goal_ = std::move(goal);
  ++counters_.planner_calls;
}

void Trainer::update_abstract() {
  ++counters_.abstract_update_attempts;
  const auto batch = extended_.sample_extended_batch(buffer_rng_, static_cast<std::size_t>(cfg_.abstract_batch));
  if (!batch) return;
  const AbstractLoss loss = agent_.abstract_model.update_abstract(*batch, agent_.world_model, cfg_.lr_abstract);
  latest_.abstract_latent_mse = loss.latent_mse;
  latest_.abstract_rew_mse = loss.reward_mse;
  ++counters_.abstract_updates;
}

void Trainer::update_primitive() {
  ++counters_.primitive_update_attempts;
  const auto batch = primitive_.sample_sequence_batch(buffer_rng_, static_cast<std::size_t>(cfg_.wm_batch),
                                                      static_cast<std::size_t>(cfg_.seq_len));
  if (!batch) return;
  const WorldModelLoss wm = agent_.world_model.update(*batch, cfg_.lr_world_model);
  latest_.wm_recon_loss = wm.recon;
  latest_.wm_dyn_loss = wm.dyn;
  latest_.wm_rew_loss = wm.reward;
  latest_.codec_loss = agent_.codec.update(wm.states, cfg_.lr_codec, codec_rng_);

  const auto n = std::min<Eigen::Index>(cfg_.imagination_starts, wm.states.cols());
  Matrix starts(wm.states.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    starts.col(i) = wm.states.col(static_cast<Eigen::Index>(uniform_index(imagination_rng_, static_cast<std::size_t>(wm.states.cols()))));
  const auto trajectories = imagine(agent_.imagination_models(), starts, cfg_.horizon, cfg_.k, &imagination_rng_);
  const HierarchySettings hs{cfg_.k, cfg_.gamma, cfg_.entropy_weight, cfg_.lr_manager, cfg_.lr_worker};
  const HierarchyLoss hl = update_hierarchy(agent_.manager, agent_.worker, trajectories, hs);
  latest_.manager_pg = hl.manager_pg;
  latest_.worker_pg = hl.worker_pg;
  ++counters_.primitive_updates;
}

void Trainer::finish_episode(bool success) {
  EpisodeRecord rec;
  rec.end_step = t_;
  rec.episode = static_cast<long long>(episode_) + 1;
  rec.episode_return = episode_return_;
  rec.success = success;
  rec.length = episode_step_;
  episodes_.push_back(rec);
  if (csv_ && rec.episode % cfg_.eval_every == 0) {
    MetricsRow row = latest_;
    row.step = rec.end_step;
    row.episode = rec.episode;
    row.episode_return = rec.episode_return;
    row.success = rec.success;
    row.plan_time_us = cfg_.measure_plan_time ? last_plan_time_us_ : 0;
    *csv_ << format_metrics_row(row) << '\n';
  }
  ++episode_;
  episode_step_ = 0;
  episode_return_ = 0.0;
  prev_latent_ = Vector::Zero(cfg_.latent_dim);
  prev_action_ = kNullAction;
  obs_ = env_.reset();
}

void Trainer::step() {
  StepTrace trace;
  trace.t = t_;
  trace.episode_step = episode_step_;

  const Vector latent = episode_step_ == 0 ? agent_.world_model.encode_initial(obs_)
                                           : agent_.world_model.encode(prev_latent_, prev_action_, obs_);
  if (episode_step_ % cfg_.k == 0) {
    choose_goal(latent, obs_);
    segment_start_ = obs_;
    segment_reward_ = 0.0;
    segment_start_step_ = episode_step_;
    trace.planned = true;
  }
  trace.goal_code = goal_code_.indices;

  const int action = agent_.worker.act(latent, goal_, &act_rng_);
  const Transition tr = env_.step(action);
  primitive_.push(tr, episode_, static_cast<std::uint64_t>(episode_step_));
  segment_reward_ += tr.reward;
  episode_return_ += tr.reward;

  if ((episode_step_ + 1) % cfg_.k == 0) {
    ExtendedTransition e;
    e.start_observation = segment_start_;
    e.end_observation = tr.next_observation;
    e.goal = goal_;
    e.cumulative_reward = segment_reward_;
    e.start_step = static_cast<std::uint64_t>(segment_start_step_);
    e.episode = episode_;
    extended_.push(e, &primitive_);
    ++counters_.extended_pushes;
    trace.extended_push = true;
  } else if (tr.terminal) {
    ++counters_.segments_discarded;
  }

  if (t_ % cfg_.abstract_period == 0) {
    update_abstract();
    trace.abstract_attempt = true;
  }
  if (t_ % cfg_.primitive_update_period == 0) {
    update_primitive();
    trace.primitive_attempt = true;
  }

  prev_latent_ = latent;
  prev_action_ = action;
  obs_ = tr.next_observation;
  ++episode_step_;
  ++t_;
  if (trace_) trace_->push_back(std::move(trace));
  if (tr.terminal) finish_episode(tr.reward > 0.0);
}

TrainingSummary Trainer::summary() const {
  TrainingSummary s;
  s.counters = counters_;
  s.episodes = episodes_;
  s.env_steps = t_;
  for (const auto& e : episodes_) {
    if (e.success) {
      s.episodes_to_first_success = e.episode;
      s.steps_to_first_success = e.end_step;
      break;
    }
  }
  const long long window_start = cfg_.total_env_steps - cfg_.total_env_steps / 5;
  long long n = 0;
  long long wins = 0;
  for (const auto& e : episodes_) {
    if (e.end_step > window_start) {
      ++n;
      wins += e.success ? 1 : 0;
    }
  }
  s.final_success_rate = n ? static_cast<Scalar>(wins) / static_cast<Scalar>(n) : 0.0;
  return s;
}

TrainingSummary Trainer::run(std::ostream* csv) {
  csv_ = csv;
  if (csv_) *csv_ << kMetricsHeader << '\n';
  while (t_ < cfg_.total_env_steps) {
    step();
    if (cfg_.stop_at_first_success && !episodes_.empty() && episodes_.back().success) break;
  }
  if (csv_) csv_->flush();
  return summary();
}

TrainingSummary run_training(const AgentConfig& cfg, std::ostream* csv) {
  Trainer trainer(cfg);
  return trainer.run(csv);
}

// ---------------------------------------------------------------------------
// Transfer

TransferArm parse_transfer_arm(const std::string& s) {
  if (s == "full") return TransferArm::full;
  if (s == "no_abstract") return TransferArm::no_abstract;
  if (s == "scratch") return TransferArm::scratch;
  throw ConfigError("unknown transfer arm '" + s + "' (expected full, no_abstract or scratch)");
}

std::string to_string(TransferArm arm) {
  switch (arm) {
    case TransferArm::full:
      return "full";
    case TransferArm::no_abstract:
      return "no_abstract";
    case TransferArm::scratch:
      return "scratch";
  }
  return "?";
}

std::set<std::string> transfer_components(TransferArm arm) {
  switch (arm) {
    case TransferArm::full:
      return {"worker", "manager", "abstract_wm", "world_model", "goal_codec"};
    case TransferArm::no_abstract:
      return {"worker", "manager", "world_model", "goal_codec"};
    case TransferArm::scratch:
      return {};
  }
  return {};
}

std::string pretrain(const AgentConfig& cfg, std::ostream* csv) {
  Trainer trainer(cfg);
  trainer.run(csv);
  std::ostringstream out(std::ios::binary);
  save_checkpoint(trainer.agent(), out, static_cast<std::uint64_t>(trainer.env_steps()));
  return out.str();
}

TrainingSummary finetune(const AgentConfig& cfg, const std::string& checkpoint, TransferArm arm,
                         std::ostream* csv) {
  Trainer trainer(cfg);
  const auto components = transfer_components(arm);
  if (!components.empty()) {
    std::istringstream in(checkpoint, std::ios::binary);
    load_checkpoint(trainer.agent(), in, components);
  }
  return trainer.run(csv);
}

TrainingSummary run_transfer(const AgentConfig& pretrain_cfg, const AgentConfig& finetune_cfg, TransferArm arm,
                             std::ostream* csv) {
  const std::string checkpoint = arm == TransferArm::scratch ? std::string() : pretrain(pretrain_cfg);
  return finetune(finetune_cfg, checkpoint, arm, csv);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const Agent& agent, const AgentConfig& cfg, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw UsageError("evaluate: episode count must be positive");
  MazeEnv env(make_layout(cfg), cfg.effective_max_episode_steps());
  Rng manager_rng = substream(seed, "eval/manager");
  Rng planner_rng = substream(seed, "eval/planner");
  EvalResult result;
  result.episodes = episodes;
  long long total_length = 0;
  int wins = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    Observation obs = env.reset();
    Vector prev = Vector::Zero(agent.world_model.latent_dim());
    int prev_action = kNullAction;
    Vector goal;
    for (int step = 0;; ++step) {
      const Vector latent = step == 0 ? agent.world_model.encode_initial(obs)
                                      : agent.world_model.encode(prev, prev_action, obs);
      if (step % cfg.k == 0) {
        goal = choose_goal(agent, agent.world_model.encode_initial(obs), cfg.planner_enabled, manager_rng,
                           planner_rng, true)
                   .second;
      }
      const int action = agent.worker.act(latent, goal, nullptr);
      const Transition tr = env.step(action);
      prev = latent;
      prev_action = action;
      obs = tr.next_observation;
      if (tr.terminal) {
        total_length += step + 1;
        wins += tr.reward > 0.0 ? 1 : 0;
        break;
      }
    }
  }
  result.success_rate = static_cast<Scalar>(wins) / episodes;
  result.mean_episode_length = static_cast<Scalar>(total_length) / episodes;
  return result;
}

}  // namespace forecaster
