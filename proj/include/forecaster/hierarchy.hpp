#pragma once

#include "forecaster/config.hpp"
#include "forecaster/goal_codec.hpp"
#include "forecaster/world_model.hpp"

#include <vector>

namespace forecaster {

/// Goal-code policy over latent states.
class Manager {
 public:
  Manager() = default;
  Manager(const AgentConfig& cfg, Rng& init);

  int factors() const { return factors_; }
  int classes() const { return classes_; }

  Vector logits(const Vector& latent) const;
  /// Factorwise categorical sample, or the argmax when `rng` is null.
  GoalCode sample(const Vector& latent, Rng* rng) const;
  /// log mgr(code | latent), summed over factors.
  Scalar log_prob(const Vector& latent, const GoalCode& code) const;

  Mlp net;

 private:
  int factors_ = 0;
  int classes_ = 0;
};

/// Goal-conditioned primitive policy.
class Worker {
 public:
  Worker() = default;
  Worker(const AgentConfig& cfg, Rng& init);

  Vector logits(const Vector& latent, const Vector& goal) const;
  int act(const Vector& latent, const Vector& goal, Rng* rng) const;

  Mlp net;
};

/// (s . g) / max(|g|^2, 1e-6).
Scalar worker_goal_reward(const Vector& latent, const Vector& goal);

struct ImaginedTrajectory {
  std::vector<Vector> states;             // H + 1
  std::vector<int> actions;               // H
  std::vector<Vector> goals;              // one per K-step segment
  std::vector<GoalCode> codes;            // one per K-step segment
  std::vector<Scalar> predicted_rewards;  // H, rew(s_{t+1})
};

struct ImaginationModels {
  const WorldModel& world_model;
  const GoalCodec& codec;
  const Manager& manager;
  const Worker& worker;
};

/// Rolls the dynamics forward under the worker, re-sampling a manager goal
/// every `k` steps. `rng` null means greedy policies.
std::vector<ImaginedTrajectory> imagine(const ImaginationModels& models, const Matrix& start_states,
                                        int horizon, int k, Rng* rng);

struct HierarchyLoss {
  Scalar manager_pg = 0.0;
  Scalar worker_pg = 0.0;
};

struct HierarchySettings {
  int k = 8;
  Scalar gamma = 0.99;
  Scalar entropy_weight = 0.01;
  Scalar lr_manager = 3e-4;
  Scalar lr_worker = 3e-4;
};

/// Surrogate REINFORCE-with-mean-baseline losses and their gradients.
/// Manager return: segment reward sums discounted by gamma^K between
/// decisions. Worker return: worker_goal_reward discounted by gamma inside
/// the segment. Baselines are batch means per decision / time index.
HierarchyLoss hierarchy_loss(const Manager& manager, const Worker& worker,
                             const std::vector<ImaginedTrajectory>& trajectories,
                             const HierarchySettings& settings, ParameterSet* manager_grad,
                             ParameterSet* worker_grad);

HierarchyLoss update_hierarchy(Manager& manager, Worker& worker,
                               const std::vector<ImaginedTrajectory>& trajectories,
                               const HierarchySettings& settings);

}  // namespace forecaster
