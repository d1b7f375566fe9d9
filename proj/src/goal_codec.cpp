#include "forecaster/goal_codec.hpp"

#include "forecaster/world_model.hpp"

#include <cmath>

namespace forecaster {

Vector GoalCode::one_hot() const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(indices.size()) * classes);
  for (std::size_t f = 0; f < indices.size(); ++f) v[static_cast<Eigen::Index>(f) * classes + indices[f]] = 1.0;
  return v;
}

int argmax(const Eigen::Ref<const Vector>& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

int sample_categorical(const Eigen::Ref<const Vector>& logits, Rng& rng) {
  const Vector p = (logits.array() - logits.maxCoeff()).exp();
  const Scalar total = p.sum();
  Scalar u = uniform01(rng) * total;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

Matrix factor_softmax(const Matrix& logits, int factors, int classes) {
  if (logits.rows() != static_cast<Eigen::Index>(factors) * classes) {
    throw DimensionError("factor_softmax: logits have " + std::to_string(logits.rows()) +
                         " rows, expected " + std::to_string(factors * classes));
  }
  Matrix p(logits.rows(), logits.cols());
  for (int f = 0; f < factors; ++f) {
    auto block = logits.middleRows(f * classes, classes);
    Matrix e = (block.rowwise() - block.colwise().maxCoeff()).array().exp();
    p.middleRows(f * classes, classes) = e.array().rowwise() / e.colwise().sum().array();
  }
  return p;
}

GoalCode code_from_logits(const Eigen::Ref<const Vector>& logits, int factors, int classes, Rng* rng) {
  GoalCode code{classes, std::vector<int>(static_cast<std::size_t>(factors))};
  for (int f = 0; f < factors; ++f) {
    const auto block = logits.segment(f * classes, classes);
    code.indices[static_cast<std::size_t>(f)] = rng ? sample_categorical(block, *rng) : argmax(block);
  }
  return code;
}

GoalCodec::GoalCodec(const AgentConfig& cfg, Rng& init)
    : enc_net("enc", {cfg.latent_dim, cfg.hidden, cfg.code_factors * cfg.code_classes}, Activation::tanh),
      dec_net("dec", {cfg.code_factors * cfg.code_classes, cfg.hidden, cfg.latent_dim}, Activation::tanh),
      factors_(cfg.code_factors),
      classes_(cfg.code_classes) {
  enc_net.initialize(init);
  dec_net.initialize(init);
}

std::uint64_t GoalCodec::code_space_size() const {
  std::uint64_t n = 1;
  for (int f = 0; f < factors_; ++f) n *= static_cast<std::uint64_t>(classes_);
  return n;
}

GoalCode GoalCodec::encode_goal(const Vector& latent, Rng* rng) const {
  return code_from_logits(forward(enc_net, latent), factors_, classes_, rng);
}

Vector GoalCodec::decode_goal(const GoalCode& code) const {
  if (code.factors() != factors_ || code.classes != classes_) {
    throw DimensionError("decode_goal: code shape does not match the codec");
  }
  return forward(dec_net, code.one_hot());
}

Matrix GoalCodec::decode_goal(const std::vector<GoalCode>& codes) const {
  Matrix input(static_cast<Eigen::Index>(factors_) * classes_, static_cast<Eigen::Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) input.col(static_cast<Eigen::Index>(i)) = codes[i].one_hot();
  return forward(dec_net, input);
}

Scalar GoalCodec::loss(const Matrix& latents, const std::vector<GoalCode>& codes, ParameterSet* grad,
                       const Matrix* frozen_probs) const {
  const Eigen::Index n = latents.cols();
  if (static_cast<Eigen::Index>(codes.size()) != n) {
    throw DimensionError("codec loss: need one code per latent");
  }
  MlpCache enc_cache;
  const Matrix logits = forward(enc_net, latents, enc_cache);
  const Matrix probs = factor_softmax(logits, factors_, classes_);
  Matrix hard(logits.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) hard.col(i) = codes[static_cast<std::size_t>(i)].one_hot();
  // Straight-through: forward value is the hard code, gradient flows via probs.
  const Matrix& stopped = frozen_probs ? *frozen_probs : probs;
  const Matrix z = hard + probs - stopped;

  MlpCache dec_cache;
  const Matrix recon = forward(dec_net, z, dec_cache);
  const Matrix err = recon - latents;  // the target latents are constants
  const Scalar value = err.squaredNorm() / static_cast<Scalar>(err.size());
  if (!grad) return value;

  *grad = joint_parameters().zeros_like();
  const MlpGradient gd = backward(dec_net, dec_cache, err * (2.0 / static_cast<Scalar>(err.size())));
  for (const auto& [key, t] : gd.params.entries()) grad->at("dec/" + key).data = t.data;

  // Softmax Jacobian per factor: dL/dl = p * (dL/dp - <dL/dp, p>).
  const Matrix& dz = gd.input;
  Matrix dlogits(logits.rows(), n);
  for (int f = 0; f < factors_; ++f) {
    const auto p = probs.middleRows(f * classes_, classes_);
    const auto g = dz.middleRows(f * classes_, classes_);
    const Eigen::RowVectorXd inner = (p.array() * g.array()).colwise().sum();
    dlogits.middleRows(f * classes_, classes_) = p.array() * (g.rowwise() - inner).array();
  }
  const MlpGradient ge = backward(enc_net, enc_cache, dlogits);
  for (const auto& [key, t] : ge.params.entries()) grad->at("enc/" + key).data = t.data;
  return value;
}

Scalar GoalCodec::update(const Matrix& latents, Scalar lr, Rng& rng) {
  const Matrix logits = forward(enc_net, latents);
  std::vector<GoalCode> codes;
  codes.reserve(static_cast<std::size_t>(latents.cols()));
  for (Eigen::Index i = 0; i < latents.cols(); ++i)
    codes.push_back(code_from_logits(logits.col(i), factors_, classes_, &rng));
  ParameterSet grad;
  const Scalar value = loss(latents, codes, &grad);
  adam_step_joint({{"enc", &enc_net}, {"dec", &dec_net}}, grad, lr);
  return value;
}

ParameterSet GoalCodec::joint_parameters() const {
  return merge_parameters("goal_codec", {{"enc", &enc_net}, {"dec", &dec_net}});
}

void GoalCodec::set_joint_parameters(const ParameterSet& joint) {
  split_parameters(joint, {{"enc", &enc_net}, {"dec", &dec_net}});
}

}  // namespace forecaster
