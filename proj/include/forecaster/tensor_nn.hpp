#pragma once

#include "forecaster/common.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace forecaster {

/// Dense row-major tensor. `data` is flat; `shape` gives the logical extents.
struct Tensor {
  std::vector<Eigen::Index> shape;
  Vector data;

  Tensor() = default;
  Tensor(std::vector<Eigen::Index> shape_, Vector data_);
  static Tensor zeros(std::vector<Eigen::Index> shape);
  static Tensor from_matrix(const Matrix& m);  // shape [rows, cols]
  static Tensor from_vector(const Vector& v);  // shape [n]

  Eigen::Index size() const { return data.size(); }
  Eigen::Index last_dim() const { return shape.empty() ? 0 : shape.back(); }

  /// View a rank-2 tensor [r, c] as an r x c matrix.
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> as_matrix();
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  as_matrix() const;

  bool all_finite() const { return data.allFinite(); }
};

std::string shape_string(const std::vector<Eigen::Index>& shape);

struct AdamMoments {
  Vector first;
  Vector second;
  std::uint64_t steps = 0;
};

/// Named collection of tensors plus Adam optimizer state.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  /// Adds a new entry; throws ConfigError on duplicate names.
  Tensor& add(const std::string& key, Tensor value);
  Tensor& at(const std::string& key);
  const Tensor& at(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }

  std::size_t parameter_count() const;

  /// Same keys and shapes, all zeros, no optimizer state.
  ParameterSet zeros_like() const;

  /// Copy values from `other`, which must match keys and shapes exactly.
  void assign_values(const ParameterSet& other);

  void scale(Scalar factor);
  void add_scaled(const ParameterSet& other, Scalar factor);

  /// Flatten all entries (in key order) into one vector, and back.
  Vector flatten() const;
  void unflatten(const Vector& flat);

  std::map<std::string, AdamMoments>& moments() { return moments_; }

 private:
  std::string name_;
  std::map<std::string, Tensor> entries_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

enum class Activation { tanh, relu, identity };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

/// Fully connected network. Weights "w<i>" have shape [out, in], biases
/// "b<i>" shape [out]. Hidden layers use `activation`, the last layer uses
/// `output_activation`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<Eigen::Index> layer_sizes, Activation activation,
      Activation output_activation = Activation::identity);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void initialize(Rng& rng);
  void set_zero();

  const std::vector<Eigen::Index>& layer_sizes() const { return layer_sizes_; }
  Eigen::Index input_size() const { return layer_sizes_.front(); }
  Eigen::Index output_size() const { return layer_sizes_.back(); }
  std::size_t layer_count() const { return layer_sizes_.size() - 1; }
  Activation activation() const { return activation_; }
  Activation output_activation() const { return output_activation_; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  weight(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;

 private:
  std::vector<Eigen::Index> layer_sizes_;
  Activation activation_ = Activation::tanh;
  Activation output_activation_ = Activation::identity;
  ParameterSet params_;
};

/// Per-layer activations retained by the forward pass (column-per-sample).
struct MlpCache {
  std::vector<Matrix> activations;  // activations[0] is the input
};

/// Batched forward pass; `input` is (input_size x batch).
Matrix forward(const Mlp& net, const Matrix& input);
Matrix forward(const Mlp& net, const Matrix& input, MlpCache& cache);
Vector forward(const Mlp& net, const Vector& input);
/// Tensor overload: leading dimensions are flattened into the batch.
Tensor forward(const Mlp& net, const Tensor& input);

struct MlpGradient {
  ParameterSet params;
  Matrix input;  // d loss / d input, same layout as the forward input
};

/// Reverse pass given the cache of a matching forward call.
MlpGradient backward(const Mlp& net, const MlpCache& cache, const Matrix& upstream);
MlpGradient backward(const Mlp& net, const Matrix& input, const Matrix& upstream);
ParameterSet backward(const Mlp& net, const Tensor& input, const Tensor& upstream);

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// One Adam step in place. Entries whose gradient is identically zero are
/// left untouched (values and moments), so a zero gradient is a no-op.
void adam_step(ParameterSet& params, const ParameterSet& grads, const AdamConfig& cfg);

/// Returns value; fills `grad` (same keys as params) when non-null.
using DifferentiableLoss = std::function<Scalar(const ParameterSet&, ParameterSet*)>;

struct GradCheckReport {
  Scalar max_relative_error = 0.0;
  std::string worst_entry;
  bool passed = false;
};

/// Compares the analytic gradient of `loss` against central differences
/// with step `h` over every scalar parameter.
GradCheckReport grad_check_report(const ParameterSet& params, const DifferentiableLoss& loss,
                                  Scalar tol, Scalar h = 1e-5);
bool grad_check(const ParameterSet& params, const DifferentiableLoss& loss, Scalar tol,
                Scalar h = 1e-5);

/// Loss over network outputs: value, plus d loss / d output when non-null.
using OutputLoss = std::function<Scalar(const Matrix&, Matrix*)>;

bool grad_check(const Mlp& net, const OutputLoss& loss, const Matrix& input, Scalar tol,
                Scalar h = 1e-5);

// Serialization of one ParameterSet: name, then for each entry its name,
// rank, u64 dims and a little-endian float32 payload.
void write_parameter_set(std::ostream& out, const ParameterSet& params);
ParameterSet read_parameter_set(std::istream& in);

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_string(std::ostream& out, const std::string& s);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
std::string read_string(std::istream& in);
}  // namespace io

}  // namespace forecaster
