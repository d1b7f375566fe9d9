#include "forecaster/tensor_nn.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace forecaster {

namespace {

Eigen::Index shape_product(const std::vector<Eigen::Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                         [](Eigen::Index a, Eigen::Index b) { return a * b; });
}

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::tanh:
      z = z.array().tanh();
      break;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::identity:
      break;
  }
}

// Derivative expressed through the activation output y = act(z).
void multiply_activation_grad(Activation a, const Matrix& y, Matrix& grad) {
  switch (a) {
    case Activation::tanh:
      grad.array() *= (1.0 - y.array().square());
      break;
    case Activation::relu:
      grad.array() *= (y.array() > 0.0).cast<Scalar>();
      break;
    case Activation::identity:
      break;
  }
}

std::string weight_key(std::size_t i) { return "w" + std::to_string(i); }
std::string bias_key(std::size_t i) { return "b" + std::to_string(i); }

}  // namespace

Tensor::Tensor(std::vector<Eigen::Index> shape_, Vector data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_product(shape) != data.size()) {
    throw DimensionError("Tensor: shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " elements");
  }
}

Tensor Tensor::zeros(std::vector<Eigen::Index> shape) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), Vector::Zero(n));
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t = zeros({m.rows(), m.cols()});
  t.as_matrix() = m;
  return t;
}

Tensor Tensor::from_vector(const Vector& v) { return Tensor({v.size()}, v); }

Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
Tensor::as_matrix() {
  const Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
  const Eigen::Index cols = shape.size() == 2 ? shape[1] : data.size();
  return {data.data(), rows, cols};
}

Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
Tensor::as_matrix() const {
  const Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
  const Eigen::Index cols = shape.size() == 2 ? shape[1] : data.size();
  return {data.data(), rows, cols};
}

std::string shape_string(const std::vector<Eigen::Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// ParameterSet

Tensor& ParameterSet::add(const std::string& key, Tensor value) {
  auto [it, inserted] = entries_.emplace(key, std::move(value));
  if (!inserted) {
    throw ConfigError("ParameterSet '" + name_ + "': duplicate entry '" + key + "'");
  }
  return it->second;
}

Tensor& ParameterSet::at(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("ParameterSet '" + name_ + "': no entry '" + key + "'");
  }
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("ParameterSet '" + name_ + "': no entry '" + key + "'");
  }
  return it->second;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [k, t] : entries_) n += static_cast<std::size_t>(t.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out(name_);
  for (const auto& [k, t] : entries_) out.add(k, Tensor::zeros(t.shape));
  return out;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ConfigError("ParameterSet '" + name_ + "': entry count mismatch on assign");
  }
  for (auto& [k, t] : entries_) {
    const Tensor& src = other.at(k);
    if (src.shape != t.shape) {
      throw DimensionError("ParameterSet '" + name_ + "': entry '" + k + "' shape " +
                           shape_string(src.shape) + " vs " + shape_string(t.shape));
    }
    t.data = src.data;
  }
}

void ParameterSet::scale(Scalar factor) {
  for (auto& [k, t] : entries_) t.data *= factor;
}

void ParameterSet::add_scaled(const ParameterSet& other, Scalar factor) {
  for (auto& [k, t] : entries_) t.data += factor * other.at(k).data;
}

Vector ParameterSet::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& [k, t] : entries_) {
    flat.segment(offset, t.size()) = t.data;
    offset += t.size();
  }
  return flat;
}

void ParameterSet::unflatten(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw DimensionError("ParameterSet::unflatten: size mismatch");
  }
  Eigen::Index offset = 0;
  for (auto& [k, t] : entries_) {
    t.data = flat.segment(offset, t.size());
    offset += t.size();
  }
}

// ---------------------------------------------------------------------------
// Mlp

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
    case Activation::identity:
      return "identity";
  }
  return "?";
}

Mlp::Mlp(std::string name, std::vector<Eigen::Index> layer_sizes, Activation activation,
         Activation output_activation)
    : layer_sizes_(std::move(layer_sizes)),
      activation_(activation),
      output_activation_(output_activation),
      params_(std::move(name)) {
  if (layer_sizes_.size() < 2) {
    throw ConfigError("Mlp '" + params_.name() + "': need at least 2 layer sizes, got " +
                      std::to_string(layer_sizes_.size()));
  }
  for (auto s : layer_sizes_) {
    if (s <= 0) {
      throw ConfigError("Mlp '" + params_.name() + "': layer sizes must be positive, got " +
                        shape_string(layer_sizes_));
    }
  }
  for (std::size_t i = 0; i + 1 < layer_sizes_.size(); ++i) {
    params_.add(weight_key(i), Tensor::zeros({layer_sizes_[i + 1], layer_sizes_[i]}));
    params_.add(bias_key(i), Tensor::zeros({layer_sizes_[i + 1]}));
  }
}

void Mlp::initialize(Rng& rng) {
  for (std::size_t i = 0; i < layer_count(); ++i) {
    const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(layer_sizes_[i]));
    for (const auto& key : {weight_key(i), bias_key(i)}) {
      Tensor& t = params_.at(key);
      for (Eigen::Index j = 0; j < t.size(); ++j) t.data[j] = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
}

void Mlp::set_zero() {
  for (auto& [k, t] : params_.entries()) t.data.setZero();
}

Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
Mlp::weight(std::size_t layer) const {
  return params_.at(weight_key(layer)).as_matrix();
}

Eigen::Map<const Vector> Mlp::bias(std::size_t layer) const {
  const Tensor& b = params_.at(bias_key(layer));
  return {b.data.data(), b.size()};
}

Matrix forward(const Mlp& net, const Matrix& input, MlpCache& cache) {
  if (input.rows() != net.input_size()) {
    throw DimensionError("forward(" + net.params().name() + "): input has " +
                         std::to_string(input.rows()) + " features, net expects " +
                         std::to_string(net.input_size()));
  }
  cache.activations.clear();
  cache.activations.reserve(net.layer_count() + 1);
  cache.activations.push_back(input);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    Matrix z = net.weight(i) * cache.activations.back();
    z.colwise() += net.bias(i);
    apply_activation(i + 1 == net.layer_count() ? net.output_activation() : net.activation(), z);
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Matrix forward(const Mlp& net, const Matrix& input) {
  MlpCache cache;
  return forward(net, input, cache);
}

Vector forward(const Mlp& net, const Vector& input) {
  return forward(net, Matrix(input)).col(0);
}

Tensor forward(const Mlp& net, const Tensor& input) {
  if (input.shape.empty() || input.last_dim() != net.input_size()) {
    throw DimensionError("forward(" + net.params().name() + "): input shape " +
                         shape_string(input.shape) + " incompatible with input size " +
                         std::to_string(net.input_size()));
  }
  const Eigen::Index batch = input.size() / input.last_dim();
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rows(
      input.data.data(), batch, input.last_dim());
  const Matrix out = forward(net, Matrix(rows.transpose()));
  auto shape = input.shape;
  shape.back() = net.output_size();
  Tensor result = Tensor::zeros(shape);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      result.data.data(), batch, net.output_size()) = out.transpose();
  return result;
}

MlpGradient backward(const Mlp& net, const MlpCache& cache, const Matrix& upstream) {
  const Matrix& output = cache.activations.back();
  if (upstream.rows() != output.rows() || upstream.cols() != output.cols()) {
    throw DimensionError("backward(" + net.params().name() + "): upstream gradient " +
                         std::to_string(upstream.rows()) + "x" + std::to_string(upstream.cols()) +
                         " vs output " + std::to_string(output.rows()) + "x" +
                         std::to_string(output.cols()));
  }
  MlpGradient grad{net.params().zeros_like(), Matrix()};
  Matrix delta = upstream;
  for (std::size_t i = net.layer_count(); i-- > 0;) {
    multiply_activation_grad(i + 1 == net.layer_count() ? net.output_activation() : net.activation(),
                             cache.activations[i + 1], delta);
    grad.params.at(weight_key(i)).as_matrix() = delta * cache.activations[i].transpose();
    grad.params.at(bias_key(i)).data = delta.rowwise().sum();
    delta = net.weight(i).transpose() * delta;
  }
  grad.input = std::move(delta);
  return grad;
}

MlpGradient backward(const Mlp& net, const Matrix& input, const Matrix& upstream) {
  MlpCache cache;
  forward(net, input, cache);
  return backward(net, cache, upstream);
}

ParameterSet backward(const Mlp& net, const Tensor& input, const Tensor& upstream) {
  if (input.shape.empty() || input.last_dim() != net.input_size()) {
    throw DimensionError("backward(" + net.params().name() + "): input shape " +
                         shape_string(input.shape));
  }
  auto expected = input.shape;
  expected.back() = net.output_size();
  if (upstream.shape != expected) {
    throw DimensionError("backward(" + net.params().name() + "): upstream shape " +
                         shape_string(upstream.shape) + " vs output shape " +
                         shape_string(expected));
  }
  const Eigen::Index batch = input.size() / input.last_dim();
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      input.data.data(), batch, input.last_dim());
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(
      upstream.data.data(), batch, net.output_size());
  return backward(net, Matrix(x.transpose()), Matrix(g.transpose())).params;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParameterSet& params, const ParameterSet& grads, const AdamConfig& cfg) {
  if (grads.entries().size() != params.entries().size()) {
    throw ConfigError("adam_step(" + params.name() + "): gradient has " +
                      std::to_string(grads.entries().size()) + " entries, parameters have " +
                      std::to_string(params.entries().size()));
  }
  for (const auto& [key, g] : grads.entries()) {
    if (!params.contains(key)) {
      throw ConfigError("adam_step(" + params.name() + "): unknown gradient key '" + key + "'");
    }
    if (params.at(key).shape != g.shape) {
      throw ConfigError("adam_step(" + params.name() + "): gradient '" + key + "' shape " +
                        shape_string(g.shape));
    }
  }
  params.set_step_count(params.step_count() + 1);
  if (cfg.lr == 0.0) return;
  for (auto& [key, p] : params.entries()) {
    const Vector& g = grads.at(key).data;
    if (g.isZero(0.0)) continue;
    AdamMoments& mom = params.moments()[key];
    if (mom.first.size() != p.size()) {
      mom.first = Vector::Zero(p.size());
      mom.second = Vector::Zero(p.size());
      mom.steps = 0;
    }
    ++mom.steps;
    mom.first = cfg.beta1 * mom.first + (1.0 - cfg.beta1) * g;
    mom.second = cfg.beta2 * mom.second + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const Scalar c1 = 1.0 - std::pow(cfg.beta1, static_cast<Scalar>(mom.steps));
    const Scalar c2 = 1.0 - std::pow(cfg.beta2, static_cast<Scalar>(mom.steps));
    p.data.array() -=
        cfg.lr * (mom.first.array() / c1) / ((mom.second.array() / c2).sqrt() + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check_report(const ParameterSet& params, const DifferentiableLoss& loss,
                                  Scalar tol, Scalar h) {
  if (!(tol > 0.0)) throw ConfigError("grad_check: tol must be positive");
  GradCheckReport report;
  ParameterSet analytic = params.zeros_like();
  loss(params, &analytic);
  ParameterSet probe = params;
  for (auto& [key, t] : probe.entries()) {
    const Vector& a = analytic.at(key).data;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const Scalar orig = t.data[i];
      t.data[i] = orig + h;
      const Scalar plus = loss(probe, nullptr);
      t.data[i] = orig - h;
      const Scalar minus = loss(probe, nullptr);
      t.data[i] = orig;
      const Scalar numeric = (plus - minus) / (2.0 * h);
      // Absolute floor keeps round-off on near-zero gradients from dominating.
      const Scalar denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
      const Scalar err = std::abs(a[i] - numeric) / denom;
      if (err > report.max_relative_error || !std::isfinite(err)) {
        report.max_relative_error = std::isfinite(err) ? err : INFINITY;
        report.worst_entry = key + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

bool grad_check(const ParameterSet& params, const DifferentiableLoss& loss, Scalar tol, Scalar h) {
  return grad_check_report(params, loss, tol, h).passed;
}

bool grad_check(const Mlp& net, const OutputLoss& loss, const Matrix& input, Scalar tol,
                Scalar h) {
  Mlp probe = net;
  DifferentiableLoss f = [&](const ParameterSet& p, ParameterSet* grad) {
    probe.params().assign_values(p);
    MlpCache cache;
    const Matrix out = forward(probe, input, cache);
    if (!grad) return loss(out, nullptr);
    Matrix dout;
    const Scalar value = loss(out, &dout);
    grad->assign_values(backward(probe, cache, dout).params);
    return value;
  };
  return grad_check(net.params(), f, tol, h);
}

// ---------------------------------------------------------------------------
// Serialization

namespace io {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_u32(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

namespace {
void read_exact(std::istream& in, unsigned char* buf, std::size_t n) {
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw LoadError("unexpected end of file");
}
}  // namespace

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  read_exact(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  if (n > (1u << 24)) throw LoadError("string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  read_exact(in, reinterpret_cast<unsigned char*>(s.data()), n);
  return s;
}

}  // namespace io

void write_parameter_set(std::ostream& out, const ParameterSet& params) {
  io::write_string(out, params.name());
  io::write_u64(out, params.step_count());
  io::write_u32(out, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [key, t] : params.entries()) {
    io::write_string(out, key);
    io::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) io::write_u64(out, static_cast<std::uint64_t>(d));
    for (Eigen::Index i = 0; i < t.size(); ++i) io::write_f32(out, static_cast<float>(t.data[i]));
  }
}

ParameterSet read_parameter_set(std::istream& in) {
  ParameterSet params(io::read_string(in));
  params.set_step_count(io::read_u64(in));
  const auto n = io::read_u32(in);
  for (std::uint32_t e = 0; e < n; ++e) {
    std::string key = io::read_string(in);
    const auto rank = io::read_u32(in);
    if (rank > 8) throw LoadError("entry '" + key + "' has implausible rank");
    std::vector<Eigen::Index> shape(rank);
    for (auto& d : shape) d = static_cast<Eigen::Index>(io::read_u64(in));
    Tensor t = Tensor::zeros(shape);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = io::read_f32(in);
    params.add(key, std::move(t));
  }
  return params;
}

}  // namespace forecaster
