#pragma once

#include "forecaster/config.hpp"
#include "forecaster/replay.hpp"
#include "forecaster/world_model.hpp"

#include <utility>
#include <vector>

namespace forecaster {

struct AbstractLoss {
  Scalar latent_mse = 0.0;
  Scalar reward_mse = 0.0;
};

/// Option model f(s, g) -> (s after K steps of pursuing g, K-step reward sum).
class AbstractWorldModel {
 public:
  AbstractWorldModel() = default;
  AbstractWorldModel(const AgentConfig& cfg, Rng& init);

  std::pair<Vector, Scalar> predict_abstract(const Vector& latent, const Vector& goal) const;
  /// Batched: returns (next latents D x N, rewards N).
  std::pair<Matrix, Vector> predict_abstract(const Matrix& latents, const Matrix& goals) const;

  /// MSE(trans(s, g), s') + MSE(rew(s, g), r) with s, s', r treated as constants.
  AbstractLoss loss(const Matrix& latents, const Matrix& goals, const Matrix& next_latents,
                    const Vector& rewards, ParameterSet* grad) const;

  /// Re-encodes stored observations with the (frozen) world-model encoder,
  /// then takes one Adam step. The world model is never modified.
  AbstractLoss update_abstract(const std::vector<ExtendedTransition>& batch, const WorldModel& encoder,
                               Scalar lr);

  ParameterSet joint_parameters() const;
  void set_joint_parameters(const ParameterSet& joint);

  Mlp trans_net;
  Mlp rew_net;
};

/// Encodes start and end observations of extended entries with the
/// episode-start encoding (zero latent, null action).
std::pair<Matrix, Matrix> encode_segments(const std::vector<ExtendedTransition>& batch,
                                          const WorldModel& encoder);

}  // namespace forecaster
