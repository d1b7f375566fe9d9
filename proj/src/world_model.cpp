#include "forecaster/world_model.hpp"

namespace forecaster {

Vector action_one_hot(int action) {
  if (action < 0 || action > kNullAction) {
    throw DimensionError("action_one_hot: action " + std::to_string(action) + " out of range");
  }
  Vector v = Vector::Zero(kActionInputSize);
  v[action] = 1.0;
  return v;
}

ParameterSet merge_parameters(const std::string& name,
                              const std::vector<std::pair<std::string, const Mlp*>>& nets) {
  ParameterSet joint(name);
  for (const auto& [prefix, net] : nets) {
    for (const auto& [key, t] : net->params().entries()) joint.add(prefix + "/" + key, t);
  }
  return joint;
}

void split_parameters(const ParameterSet& joint,
                      const std::vector<std::pair<std::string, Mlp*>>& nets) {
  std::size_t expected = 0;
  for (const auto& [prefix, net] : nets) {
    expected += net->params().entries().size();
    for (auto& [key, t] : net->params().entries()) {
      const std::string full = prefix + "/" + key;
      if (!joint.contains(full)) {
        throw LoadError("component '" + joint.name() + "': missing entry '" + full + "'");
      }
      const Tensor& src = joint.at(full);
      if (src.shape != t.shape) {
        throw LoadError("component '" + joint.name() + "': entry '" + full + "' has shape " +
                        shape_string(src.shape) + ", expected " + shape_string(t.shape));
      }
      t.data = src.data;
    }
  }
  if (expected != joint.entries().size()) {
    throw LoadError("component '" + joint.name() + "': unexpected extra entries");
  }
}

void adam_step_joint(const std::vector<std::pair<std::string, Mlp*>>& nets, const ParameterSet& grad,
                     Scalar lr) {
  for (const auto& [prefix, net] : nets) {
    ParameterSet sub = net->params().zeros_like();
    for (auto& [key, t] : sub.entries()) t.data = grad.at(prefix + "/" + key).data;
    adam_step(net->params(), sub, AdamConfig{.lr = lr});
  }
}

WorldModel::WorldModel(const AgentConfig& cfg, Rng& init)
    : repr_net("repr", {cfg.latent_dim + kActionInputSize + kObservationSize, cfg.hidden, cfg.latent_dim},
               Activation::tanh, Activation::tanh),
      dyn_net("dyn", {cfg.latent_dim + kActionInputSize, cfg.hidden, cfg.latent_dim}, Activation::tanh,
              Activation::tanh),
      rec_net("rec", {cfg.latent_dim, cfg.hidden, kObservationSize}, Activation::tanh),
      rew_net("rew", {cfg.latent_dim, cfg.hidden, 1}, Activation::tanh),
      recon_weight(cfg.recon_weight),
      dyn_weight(cfg.dyn_weight),
      reward_weight(cfg.reward_weight),
      latent_dim_(cfg.latent_dim) {
  repr_net.initialize(init);
  dyn_net.initialize(init);
  rec_net.initialize(init);
  rew_net.initialize(init);
}

Vector WorldModel::encode(const Vector& prev_latent, int prev_action, const Observation& obs) const {
  if (prev_latent.size() != latent_dim_) {
    throw DimensionError("encode: previous latent has dimension " +
                         std::to_string(prev_latent.size()) + ", expected " +
                         std::to_string(latent_dim_));
  }
  if (obs.patch.size() != kPatchSize || obs.proprio.size() != kProprioSize) {
    throw DimensionError("encode: observation has wrong size");
  }
  Vector input(repr_net.input_size());
  input << prev_latent, action_one_hot(prev_action), obs.flat();
  return forward(repr_net, input);
}

Vector WorldModel::encode_initial(const Observation& obs) const {
  return encode(Vector::Zero(latent_dim_), kNullAction, obs);
}

Matrix WorldModel::encode_initial(const Matrix& observations) const {
  if (observations.rows() != kObservationSize) {
    throw DimensionError("encode_initial: observations have " +
                         std::to_string(observations.rows()) + " rows");
  }
  Matrix input = Matrix::Zero(repr_net.input_size(), observations.cols());
  input.row(latent_dim_ + kNullAction).setOnes();
  input.bottomRows(kObservationSize) = observations;
  return forward(repr_net, input);
}

Vector WorldModel::predict_next(const Vector& latent, int action) const {
  if (latent.size() != latent_dim_) {
    throw DimensionError("predict_next: latent has dimension " + std::to_string(latent.size()) +
                         ", expected " + std::to_string(latent_dim_));
  }
  Vector input(dyn_net.input_size());
  input << latent, action_one_hot(action);
  return forward(dyn_net, input);
}

Matrix WorldModel::predict_next(const Matrix& latents, const std::vector<int>& actions) const {
  if (latents.rows() != latent_dim_ || static_cast<std::size_t>(latents.cols()) != actions.size()) {
    throw DimensionError("predict_next: batch shape mismatch");
  }
  Matrix input = Matrix::Zero(dyn_net.input_size(), latents.cols());
  input.topRows(latent_dim_) = latents;
  for (Eigen::Index b = 0; b < latents.cols(); ++b) input(latent_dim_ + actions[b], b) = 1.0;
  return forward(dyn_net, input);
}

Vector WorldModel::decode(const Vector& latent) const {
  if (latent.size() != latent_dim_) throw DimensionError("decode: latent dimension mismatch");
  return forward(rec_net, latent);
}

Scalar WorldModel::predict_reward(const Vector& latent) const {
  if (latent.size() != latent_dim_) throw DimensionError("predict_reward: latent dimension mismatch");
  return forward(rew_net, latent)[0];
}

Vector WorldModel::predict_reward(const Matrix& latents) const {
  return forward(rew_net, latents).row(0).transpose();
}

WorldModelLoss WorldModel::loss(const std::vector<std::vector<Transition>>& batch,
                                ParameterSet* grad, const Matrix* frozen_targets) const {
  if (batch.empty() || batch.front().empty()) throw UsageError("world model loss: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto L = static_cast<Eigen::Index>(batch.front().size());
  const Eigen::Index D = latent_dim_;
  for (const auto& seq : batch) {
    if (static_cast<Eigen::Index>(seq.size()) != L) {
      throw DimensionError("world model loss: sequences must share one length");
    }
  }

  // Observations x_0..x_L and actions a_0..a_{L-1}, column b of block i.
  Matrix obs_all(kObservationSize, (L + 1) * B);
  Matrix rewards(1, L * B);
  std::vector<std::vector<int>> actions(static_cast<std::size_t>(L), std::vector<int>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& seq = batch[static_cast<std::size_t>(b)];
    obs_all.col(b) = seq.front().observation.flat();
    for (Eigen::Index i = 0; i < L; ++i) {
      const auto& t = seq[static_cast<std::size_t>(i)];
      obs_all.col((i + 1) * B + b) = t.next_observation.flat();
      rewards(0, i * B + b) = t.reward;
      actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] = t.action;
    }
  }

  // Representation rollout.
  std::vector<MlpCache> repr_caches(static_cast<std::size_t>(L + 1));
  Matrix states(D, (L + 1) * B);
  Matrix input = Matrix::Zero(repr_net.input_size(), B);
  input.row(D + kNullAction).setOnes();
  for (Eigen::Index i = 0; i <= L; ++i) {
    input.bottomRows(kObservationSize) = obs_all.middleCols(i * B, B);
    states.middleCols(i * B, B) = forward(repr_net, input, repr_caches[static_cast<std::size_t>(i)]);
    if (i < L) {
      input.topRows(D) = states.middleCols(i * B, B);
      input.middleRows(D, kActionInputSize).setZero();
      for (Eigen::Index b = 0; b < B; ++b)
        input(D + actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)], b) = 1.0;
    }
  }

  WorldModelLoss out;
  out.states = states;

  // Reconstruction of every x_i.
  MlpCache rec_cache;
  const Matrix recon = forward(rec_net, states, rec_cache);
  const Matrix recon_err = recon - obs_all;
  out.recon = recon_err.squaredNorm() / static_cast<Scalar>(recon_err.size());

  // Dynamics s_i, a_i -> s_{i+1} (stop-gradient target).
  Matrix dyn_input = Matrix::Zero(dyn_net.input_size(), L * B);
  dyn_input.topRows(D) = states.leftCols(L * B);
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index b = 0; b < B; ++b)
      dyn_input(D + actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)], i * B + b) = 1.0;
  MlpCache dyn_cache;
  const Matrix dyn_pred = forward(dyn_net, dyn_input, dyn_cache);
  const Matrix dyn_target = frozen_targets ? *frozen_targets : Matrix(states.rightCols(L * B));
  const Matrix dyn_err = dyn_pred - dyn_target;
  out.dyn = dyn_err.squaredNorm() / static_cast<Scalar>(dyn_err.size());

  // Reward r_i from s_{i+1}.
  MlpCache rew_cache;
  const Matrix rew_pred = forward(rew_net, Matrix(states.rightCols(L * B)), rew_cache);
  const Matrix rew_err = rew_pred - rewards;
  out.reward = rew_err.squaredNorm() / static_cast<Scalar>(rew_err.size());

  out.total = recon_weight * out.recon + dyn_weight * out.dyn + reward_weight * out.reward;
  if (!grad) return out;

  *grad = joint_parameters().zeros_like();
  Matrix d_states = Matrix::Zero(D, (L + 1) * B);

  auto accumulate = [&](const std::string& prefix, const ParameterSet& g) {
    for (const auto& [key, t] : g.entries()) grad->at(prefix + "/" + key).data += t.data;
  };

  {
    const MlpGradient g = backward(
        rec_net, rec_cache, recon_err * (2.0 * recon_weight / static_cast<Scalar>(recon_err.size())));
    accumulate("rec", g.params);
    d_states += g.input;
  }
  {
    const MlpGradient g = backward(
        dyn_net, dyn_cache, dyn_err * (2.0 * dyn_weight / static_cast<Scalar>(dyn_err.size())));
    accumulate("dyn", g.params);
    d_states.leftCols(L * B) += g.input.topRows(D);
  }
  {
    const MlpGradient g = backward(
        rew_net, rew_cache, rew_err * (2.0 * reward_weight / static_cast<Scalar>(rew_err.size())));
    accumulate("rew", g.params);
    d_states.rightCols(L * B) += g.input;
  }

  // Backpropagation through time over the representation chain.
  Matrix carry = Matrix::Zero(D, B);
  for (Eigen::Index i = L; i >= 0; --i) {
    const Matrix upstream = d_states.middleCols(i * B, B) + carry;
    const MlpGradient g = backward(repr_net, repr_caches[static_cast<std::size_t>(i)], upstream);
    accumulate("repr", g.params);
    carry = g.input.topRows(D);
  }
  return out;
}

WorldModelLoss WorldModel::update(const std::vector<std::vector<Transition>>& batch, Scalar lr) {
  ParameterSet grad;
  WorldModelLoss out = loss(batch, &grad);
  adam_step_joint({{"repr", &repr_net}, {"dyn", &dyn_net}, {"rec", &rec_net}, {"rew", &rew_net}},
                  grad, lr);
  return out;
}

ParameterSet WorldModel::joint_parameters() const {
  return merge_parameters("world_model",
                          {{"repr", &repr_net}, {"dyn", &dyn_net}, {"rec", &rec_net}, {"rew", &rew_net}});
}

void WorldModel::set_joint_parameters(const ParameterSet& joint) {
  split_parameters(joint, {{"repr", &repr_net}, {"dyn", &dyn_net}, {"rec", &rec_net}, {"rew", &rew_net}});
}

}  // namespace forecaster
