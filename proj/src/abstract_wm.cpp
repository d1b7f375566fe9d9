#include "forecaster/abstract_wm.hpp"

namespace forecaster {

AbstractWorldModel::AbstractWorldModel(const AgentConfig& cfg, Rng& init)
    : trans_net("trans", {2 * cfg.latent_dim, cfg.hidden, cfg.latent_dim}, Activation::tanh, Activation::tanh),
      rew_net("rew", {2 * cfg.latent_dim, cfg.hidden, 1}, Activation::tanh) {
  trans_net.initialize(init);
  rew_net.initialize(init);
}

std::pair<Vector, Scalar> AbstractWorldModel::predict_abstract(const Vector& latent, const Vector& goal) const {
  if (latent.size() + goal.size() != trans_net.input_size() || latent.size() != goal.size()) {
    throw DimensionError("predict_abstract: latent " + std::to_string(latent.size()) + " / goal " +
                         std::to_string(goal.size()) + " do not match input size " +
                         std::to_string(trans_net.input_size()));
  }
  Vector input(trans_net.input_size());
  input << latent, goal;
  return {forward(trans_net, input), forward(rew_net, input)[0]};
}

std::pair<Matrix, Vector> AbstractWorldModel::predict_abstract(const Matrix& latents, const Matrix& goals) const {
  if (latents.rows() + goals.rows() != trans_net.input_size() || latents.cols() != goals.cols()) {
    throw DimensionError("predict_abstract: batch shape mismatch");
  }
  Matrix input(trans_net.input_size(), latents.cols());
  input << latents, goals;
  return {forward(trans_net, input), forward(rew_net, input).row(0).transpose()};
}

AbstractLoss AbstractWorldModel::loss(const Matrix& latents, const Matrix& goals, const Matrix& next_latents,
                                      const Vector& rewards, ParameterSet* grad) const {
  Matrix input(trans_net.input_size(), latents.cols());
  input << latents, goals;
  MlpCache trans_cache;
  MlpCache rew_cache;
  const Matrix latent_err = forward(trans_net, input, trans_cache) - next_latents;
  const Matrix reward_err = forward(rew_net, input, rew_cache) - rewards.transpose();
  AbstractLoss out;
  out.latent_mse = latent_err.squaredNorm() / static_cast<Scalar>(latent_err.size());
  out.reward_mse = reward_err.squaredNorm() / static_cast<Scalar>(reward_err.size());
  if (!grad) return out;
  *grad = joint_parameters().zeros_like();
  const auto gt = backward(trans_net, trans_cache, latent_err * (2.0 / static_cast<Scalar>(latent_err.size())));
  const auto gr = backward(rew_net, rew_cache, reward_err * (2.0 / static_cast<Scalar>(reward_err.size())));
  for (const auto& [key, t] : gt.params.entries()) grad->at("trans/" + key).data = t.data;
  for (const auto& [key, t] : gr.params.entries()) grad->at("rew/" + key).data = t.data;
  return out;
}

std::pair<Matrix, Matrix> encode_segments(const std::vector<ExtendedTransition>& batch,
                                          const WorldModel& encoder) {
  Matrix start(kObservationSize, static_cast<Eigen::Index>(batch.size()));
  Matrix end(kObservationSize, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    start.col(static_cast<Eigen::Index>(i)) = batch[i].start_observation.flat();
    end.col(static_cast<Eigen::Index>(i)) = batch[i].end_observation.flat();
  }
  return {encoder.encode_initial(start), encoder.encode_initial(end)};
}

AbstractLoss AbstractWorldModel::update_abstract(const std::vector<ExtendedTransition>& batch,
                                                 const WorldModel& encoder, Scalar lr) {
  if (batch.empty()) return {};
  const auto [latents, next_latents] = encode_segments(batch, encoder);
  Matrix goals(latents.rows(), latents.cols());
  Vector rewards(latents.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    goals.col(static_cast<Eigen::Index>(i)) = batch[i].goal;
    rewards[static_cast<Eigen::Index>(i)] = batch[i].cumulative_reward;
  }
  ParameterSet grad;
  const AbstractLoss out = loss(latents, goals, next_latents, rewards, &grad);
  adam_step_joint({{"trans", &trans_net}, {"rew", &rew_net}}, grad, lr);
  return out;
}

ParameterSet AbstractWorldModel::joint_parameters() const {
  return merge_parameters("abstract_wm", {{"trans", &trans_net}, {"rew", &rew_net}});
}

void AbstractWorldModel::set_joint_parameters(const ParameterSet& joint) {
  split_parameters(joint, {{"trans", &trans_net}, {"rew", &rew_net}});
}

}  // namespace forecaster
