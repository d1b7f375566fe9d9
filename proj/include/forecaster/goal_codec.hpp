#pragma once

#include "forecaster/config.hpp"
#include "forecaster/tensor_nn.hpp"

#include <vector>

namespace forecaster {

/// Factored categorical goal code: one class index per factor.
struct GoalCode {
  int classes = 0;
  std::vector<int> indices;

  int factors() const { return static_cast<int>(indices.size()); }
  /// Concatenated one-hot vectors, factor-major (length factors * classes).
  Vector one_hot() const;
  friend bool operator==(const GoalCode&, const GoalCode&) = default;
};

/// Draws one index from softmax(logits).
int sample_categorical(const Eigen::Ref<const Vector>& logits, Rng& rng);
int argmax(const Eigen::Ref<const Vector>& v);

/// Per-factor softmax of a (factors * classes) logit vector or matrix column-wise.
Matrix factor_softmax(const Matrix& logits, int factors, int classes);

/// Sample (rng non-null) or take the argmax (rng null) of each factor.
GoalCode code_from_logits(const Eigen::Ref<const Vector>& logits, int factors, int classes, Rng* rng);

/// Goal autoencoder: latent -> code logits -> one-hot code -> goal vector.
class GoalCodec {
 public:
  GoalCodec() = default;
  GoalCodec(const AgentConfig& cfg, Rng& init);

  int factors() const { return factors_; }
  int classes() const { return classes_; }
  /// Number of distinct codes, classes^factors.
  std::uint64_t code_space_size() const;

  /// Samples each factor when `rng` is given; greedy (argmax) otherwise.
  GoalCode encode_goal(const Vector& latent, Rng* rng) const;
  Vector decode_goal(const GoalCode& code) const;
  Matrix decode_goal(const std::vector<GoalCode>& codes) const;

  /// Reconstruction MSE through the straight-through estimator, for fixed
  /// sampled codes. The encoder path is one_hot + p - stop_gradient(p); with
  /// `frozen_probs` supplied, stop_gradient(p) is that fixed matrix (so the
  /// value is differentiable end to end for central differences).
  Scalar loss(const Matrix& latents, const std::vector<GoalCode>& codes, ParameterSet* grad,
              const Matrix* frozen_probs = nullptr) const;

  /// Sample codes for every column of `latents`, then one Adam step.
  Scalar update(const Matrix& latents, Scalar lr, Rng& rng);

  ParameterSet joint_parameters() const;
  void set_joint_parameters(const ParameterSet& joint);

  Mlp enc_net;
  Mlp dec_net;

 private:
  int factors_ = 0;
  int classes_ = 0;
};

}  // namespace forecaster
