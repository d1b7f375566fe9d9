#pragma once

#include "forecaster/config.hpp"
#include "forecaster/env_maze.hpp"
#include "forecaster/tensor_nn.hpp"

#include <vector>

namespace forecaster {

/// Index of the "no previous action" slot in the action one-hot.
inline constexpr int kNullAction = kActionCount;
inline constexpr int kActionInputSize = kActionCount + 1;

Vector action_one_hot(int action);

struct WorldModelLoss {
  Scalar recon = 0.0;
  Scalar dyn = 0.0;
  Scalar reward = 0.0;
  Scalar total = 0.0;
  Matrix states;  // every encoded latent of the batch, one column each
};

/// Deterministic latent world model: representation, dynamics, decoder and
/// reward predictor.
class WorldModel {
 public:
  WorldModel() = default;
  WorldModel(const AgentConfig& cfg, Rng& init);

  Eigen::Index latent_dim() const { return latent_dim_; }

  Vector encode(const Vector& prev_latent, int prev_action, const Observation& obs) const;
  /// Episode-start encoding: zero latent and the null action.
  Vector encode_initial(const Observation& obs) const;
  Matrix encode_initial(const Matrix& observations) const;
  Vector predict_next(const Vector& latent, int action) const;
  Matrix predict_next(const Matrix& latents, const std::vector<int>& actions) const;
  Vector decode(const Vector& latent) const;
  Scalar predict_reward(const Vector& latent) const;
  Vector predict_reward(const Matrix& latents) const;

  /// Composite loss over a batch of equal-length contiguous sequences. When
  /// `grad` is non-null it receives gradients for "repr", "dyn", "rec",
  /// "rew" keyed as "<net>/<entry>". `frozen_targets` substitutes fixed
  /// dynamics targets (the stop-gradient values), which lets central
  /// differences check the analytic gradient.
  WorldModelLoss loss(const std::vector<std::vector<Transition>>& batch, ParameterSet* grad,
                      const Matrix* frozen_targets = nullptr) const;

  /// One Adam step on the composite loss.
  WorldModelLoss update(const std::vector<std::vector<Transition>>& batch, Scalar lr);

  /// All four networks' parameters merged under "<net>/<entry>" keys.
  ParameterSet joint_parameters() const;
  void set_joint_parameters(const ParameterSet& joint);

  Mlp repr_net;
  Mlp dyn_net;
  Mlp rec_net;
  Mlp rew_net;

  Scalar recon_weight = 1.0;
  Scalar dyn_weight = 1.0;
  Scalar reward_weight = 1.0;

 private:
  Eigen::Index latent_dim_ = 0;
};

/// Merges networks into one ParameterSet with "<prefix>/<entry>" keys.
ParameterSet merge_parameters(const std::string& name,
                              const std::vector<std::pair<std::string, const Mlp*>>& nets);
/// Splits `joint` back into the given networks.
void split_parameters(const ParameterSet& joint,
                      const std::vector<std::pair<std::string, Mlp*>>& nets);
/// Adam step on several networks whose gradients are merged in `grad`.
void adam_step_joint(const std::vector<std::pair<std::string, Mlp*>>& nets, const ParameterSet& grad,
                     Scalar lr);

}  // namespace forecaster
