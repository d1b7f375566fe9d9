#include "forecaster/hierarchy.hpp"

#include <cmath>

namespace forecaster {

namespace {

// Gradient of (-advantage * log softmax(l)[index] - entropy_weight * H(softmax(l)))
// with respect to l, scaled by `scale`. Returns the entropy.
Scalar categorical_pg_grad(const Eigen::Ref<const Vector>& logits, int index, Scalar advantage,
                           Scalar entropy_weight, Scalar scale, Eigen::Ref<Vector> dlogits,
                           Scalar* log_prob) {
  const Vector shifted = logits.array() - logits.maxCoeff();
  const Scalar log_z = std::log(shifted.array().exp().sum());
  const Vector logp = shifted.array() - log_z;
  const Vector p = logp.array().exp();
  const Scalar entropy = -(p.array() * logp.array()).sum();
  Vector g = advantage * p;  // -A * (onehot - p)
  g[index] -= advantage;
  // dH/dl_k = -p_k (log p_k + H); the loss carries -entropy_weight * H.
  g += entropy_weight * (p.array() * (logp.array() + entropy)).matrix();
  dlogits += scale * g;
  *log_prob = logp[index];
  return entropy;
}

}  // namespace

Manager::Manager(const AgentConfig& cfg, Rng& init)
    : net("manager", {cfg.latent_dim, cfg.hidden, cfg.code_factors * cfg.code_classes}, Activation::tanh),
      factors_(cfg.code_factors),
      classes_(cfg.code_classes) {
  net.initialize(init);
}

Vector Manager::logits(const Vector& latent) const {
  if (latent.size() != net.input_size()) throw DimensionError("manager: latent dimension mismatch");
  return forward(net, latent);
}

GoalCode Manager::sample(const Vector& latent, Rng* rng) const {
  return code_from_logits(logits(latent), factors_, classes_, rng);
}

Scalar Manager::log_prob(const Vector& latent, const GoalCode& code) const {
  const Vector l = logits(latent);
  Scalar total = 0.0;
  for (int f = 0; f < factors_; ++f) {
    const auto block = l.segment(f * classes_, classes_);
    const Scalar m = block.maxCoeff();
    total += block[code.indices[static_cast<std::size_t>(f)]] - m - std::log((block.array() - m).exp().sum());
  }
  return total;
}

Worker::Worker(const AgentConfig& cfg, Rng& init)
    : net("worker", {2 * cfg.latent_dim, cfg.hidden, kActionCount}, Activation::tanh) {
  net.initialize(init);
}

Vector Worker::logits(const Vector& latent, const Vector& goal) const {
  if (latent.size() + goal.size() != net.input_size()) {
    throw DimensionError("worker: latent/goal dimensions do not match the network");
  }
  Vector input(net.input_size());
  input << latent, goal;
  return forward(net, input);
}

int Worker::act(const Vector& latent, const Vector& goal, Rng* rng) const {
  const Vector l = logits(latent, goal);
  return rng ? sample_categorical(l, *rng) : argmax(l);
}

Scalar worker_goal_reward(const Vector& latent, const Vector& goal) {
  if (latent.size() != goal.size()) throw DimensionError("worker_goal_reward: dimension mismatch");
  return latent.dot(goal) / std::max(goal.squaredNorm(), 1e-6);
}

std::vector<ImaginedTrajectory> imagine(const ImaginationModels& models, const Matrix& start_states,
                                        int horizon, int k, Rng* rng) {
  const Eigen::Index B = start_states.cols();
  const Eigen::Index D = start_states.rows();
  std::vector<ImaginedTrajectory> out(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) out[static_cast<std::size_t>(b)].states.push_back(start_states.col(b));

  Matrix states = start_states;
  Matrix goals(D, B);
  for (int t = 0; t < horizon; ++t) {
    if (t % k == 0) {
      const Matrix logits = forward(models.manager.net, states);
      std::vector<GoalCode> codes;
      codes.reserve(static_cast<std::size_t>(B));
      for (Eigen::Index b = 0; b < B; ++b)
        codes.push_back(code_from_logits(logits.col(b), models.manager.factors(), models.manager.classes(), rng));
      goals = models.codec.decode_goal(codes);
      for (Eigen::Index b = 0; b < B; ++b) {
        out[static_cast<std::size_t>(b)].codes.push_back(codes[static_cast<std::size_t>(b)]);
        out[static_cast<std::size_t>(b)].goals.push_back(goals.col(b));
      }
    }
    Matrix worker_input(2 * D, B);
    worker_input << states, goals;
    const Matrix action_logits = forward(models.worker.net, worker_input);
    std::vector<int> actions(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b)
      actions[static_cast<std::size_t>(b)] =
          rng ? sample_categorical(action_logits.col(b), *rng) : argmax(action_logits.col(b));
    states = models.world_model.predict_next(states, actions);
    const Vector rewards = models.world_model.predict_reward(states);
    for (Eigen::Index b = 0; b < B; ++b) {
      auto& traj = out[static_cast<std::size_t>(b)];
      traj.actions.push_back(actions[static_cast<std::size_t>(b)]);
      traj.states.push_back(states.col(b));
      traj.predicted_rewards.push_back(rewards[b]);
    }
  }
  return out;
}

HierarchyLoss hierarchy_loss(const Manager& manager, const Worker& worker,
                             const std::vector<ImaginedTrajectory>& trajectories,
                             const HierarchySettings& settings, ParameterSet* manager_grad,
                             ParameterSet* worker_grad) {
  HierarchyLoss out;
  if (trajectories.empty()) return out;
  const auto B = static_cast<Eigen::Index>(trajectories.size());
  const auto H = static_cast<Eigen::Index>(trajectories.front().actions.size());
  const Eigen::Index K = settings.k;
  const Eigen::Index J = (H + K - 1) / K;
  if (manager_grad) *manager_grad = manager.net.params().zeros_like();
  if (worker_grad) *worker_grad = worker.net.params().zeros_like();
  if (H == 0) return out;
  const Eigen::Index D = static_cast<Eigen::Index>(trajectories.front().states.front().size());
  const Scalar discount_k = std::pow(settings.gamma, static_cast<Scalar>(K));

  // Manager: return-to-go over decisions.
  Matrix manager_returns(J, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& traj = trajectories[static_cast<std::size_t>(b)];
    if (static_cast<Eigen::Index>(traj.actions.size()) != H || static_cast<Eigen::Index>(traj.codes.size()) != J) {
      throw DimensionError("update_hierarchy: trajectories must share horizon and segment count");
    }
    Scalar running = 0.0;
    for (Eigen::Index j = J - 1; j >= 0; --j) {
      Scalar seg = 0.0;
      for (Eigen::Index t = j * K; t < std::min(H, (j + 1) * K); ++t) seg += traj.predicted_rewards[static_cast<std::size_t>(t)];
      running = seg + discount_k * running;
      manager_returns(j, b) = running;
    }
  }
  const Vector manager_baseline = manager_returns.rowwise().mean();

  Matrix manager_input(D, J * B);
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index b = 0; b < B; ++b)
      manager_input.col(j * B + b) = trajectories[static_cast<std::size_t>(b)].states[static_cast<std::size_t>(j * K)];
  MlpCache manager_cache;
  const Matrix manager_logits = forward(manager.net, manager_input, manager_cache);
  Matrix manager_dlogits = Matrix::Zero(manager_logits.rows(), manager_logits.cols());
  const Scalar manager_scale = 1.0 / static_cast<Scalar>(J * B);
  const int F = manager.factors();
  const int C = manager.classes();
  Scalar manager_loss = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index col = j * B + b;
      const Scalar advantage = manager_returns(j, b) - manager_baseline[j];
      const auto& code = trajectories[static_cast<std::size_t>(b)].codes[static_cast<std::size_t>(j)];
      for (int f = 0; f < F; ++f) {
        Scalar logp = 0.0;
        const Scalar entropy = categorical_pg_grad(
            manager_logits.col(col).segment(f * C, C), code.indices[static_cast<std::size_t>(f)], advantage,
            settings.entropy_weight, manager_scale, manager_dlogits.col(col).segment(f * C, C), &logp);
        manager_loss += manager_scale * (-advantage * logp - settings.entropy_weight * entropy);
      }
    }
  }
  out.manager_pg = manager_loss;
  if (manager_grad) *manager_grad = backward(manager.net, manager_cache, manager_dlogits).params;

  // Worker: discounted goal reward within each segment.
  Matrix worker_returns(H, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& traj = trajectories[static_cast<std::size_t>(b)];
    for (Eigen::Index j = 0; j < J; ++j) {
      const Vector& goal = traj.goals[static_cast<std::size_t>(j)];
      Scalar running = 0.0;
      for (Eigen::Index t = std::min(H, (j + 1) * K) - 1; t >= j * K; --t) {
        running = worker_goal_reward(traj.states[static_cast<std::size_t>(t + 1)], goal) + settings.gamma * running;
        worker_returns(t, b) = running;
      }
    }
  }
  const Vector worker_baseline = worker_returns.rowwise().mean();

  Matrix worker_input(2 * D, H * B);
  for (Eigen::Index t = 0; t < H; ++t)
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& traj = trajectories[static_cast<std::size_t>(b)];
      worker_input.col(t * B + b) << traj.states[static_cast<std::size_t>(t)],
          traj.goals[static_cast<std::size_t>(t / K)];
    }
  MlpCache worker_cache;
  const Matrix worker_logits = forward(worker.net, worker_input, worker_cache);
  Matrix worker_dlogits = Matrix::Zero(worker_logits.rows(), worker_logits.cols());
  const Scalar worker_scale = 1.0 / static_cast<Scalar>(H * B);
  Scalar worker_loss = 0.0;
  for (Eigen::Index t = 0; t < H; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index col = t * B + b;
      const Scalar advantage = worker_returns(t, b) - worker_baseline[t];
      Scalar logp = 0.0;
      const Scalar entropy = categorical_pg_grad(
          worker_logits.col(col), trajectories[static_cast<std::size_t>(b)].actions[static_cast<std::size_t>(t)],
          advantage, settings.entropy_weight, worker_scale, worker_dlogits.col(col), &logp);
      worker_loss += worker_scale * (-advantage * logp - settings.entropy_weight * entropy);
    }
  }
  out.worker_pg = worker_loss;
  if (worker_grad) *worker_grad = backward(worker.net, worker_cache, worker_dlogits).params;
  return out;
}

HierarchyLoss update_hierarchy(Manager& manager, Worker& worker,
                               const std::vector<ImaginedTrajectory>& trajectories,
                               const HierarchySettings& settings) {
  ParameterSet manager_grad;
  ParameterSet worker_grad;
  const HierarchyLoss out = hierarchy_loss(manager, worker, trajectories, settings, &manager_grad, &worker_grad);
  if (trajectories.empty()) return out;
  adam_step(manager.net.params(), manager_grad, AdamConfig{.lr = settings.lr_manager});
  adam_step(worker.net.params(), worker_grad, AdamConfig{.lr = settings.lr_worker});
  return out;
}

}  // namespace forecaster
