#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sop::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Layer {
  Matrix weight;  // (fan_out x fan_in)
  Vector bias;    // fan_out
};

/// Feed-forward network: ReLU on every hidden layer, linear output.
///
/// A single layer is a plain affine map. The agent uses two hidden layers
/// for every network; tests also build smaller shapes by hand.
struct MlpParams {
  std::vector<Layer> layers;

  int input_size() const;
  int output_size() const;
  std::vector<int> layer_sizes() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Tensor names in checkpoint order: "layers.<i>.weight", "layers.<i>.bias".
  std::vector<std::string> tensor_names() const;
};

/// Gradients share the parameter layout.
using MlpGrads = MlpParams;

/// Weights and biases uniform in +-1/sqrt(fan_in).
MlpParams make_mlp(std::span<const int> sizes, std::mt19937_64& rng);
MlpParams zeros_like(const MlpParams& params);
bool same_shape(const MlpParams& a, const MlpParams& b);

/// Flat views in tensor order (weights column-major inside Eigen storage).
std::vector<double> flatten(const MlpParams& params);
void unflatten(std::span<const double> values, MlpParams& params);

Vector mlp_forward(const MlpParams& params, const Vector& input);

struct ForwardCache {
  std::vector<Matrix> activations;    // activations[0] is the input batch
  std::vector<Matrix> preactivations; // one per layer
};

/// Column-per-sample batch evaluation. When `cache` is given it is filled
/// for a subsequent backward_batch().
Matrix forward_batch(const MlpParams& params, const Matrix& inputs,
                     ForwardCache* cache = nullptr);

struct BatchGradients {
  MlpGrads params;
  Matrix input;  // d<out, cotangent>/d input, one column per sample
};

/// Gradients of sum_j <output_j, output_grad_j> over the batch.
BatchGradients backward_batch(const MlpParams& params, const ForwardCache& cache,
                              const Matrix& output_grad);

struct Gradients {
  MlpGrads params;
  Vector input;
};

Gradients mlp_backward(const MlpParams& params, const Vector& input,
                       const Vector& output_grad);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::int64_t step = 0;
  AdamConfig config;

  static AdamState for_params(const MlpParams& params, AdamConfig config = {});
};

/// One bias-corrected Adam step (descent on `grads`). Throws
/// std::domain_error naming the tensor if any gradient is not finite; in
/// that case neither params nor state are modified.
void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads, double lr);

/// Max relative error between `analytic` and central differences of
/// <mlp(input), output_grad> with respect to every parameter. Coordinates
/// whose probe would move a hidden pre-activation across (or within
/// 10*probe_step of) a ReLU kink are skipped.
double compare_with_finite_diff(const MlpParams& params, const Vector& input,
                                const Vector& output_grad, const MlpGrads& analytic,
                                double probe_step);

/// compare_with_finite_diff() against mlp_backward() with an all-ones cotangent.
double finite_diff_check(const MlpParams& params, const Vector& input, double probe_step);

/// Relative error used by the gradient checks.
double relative_error(double analytic, double numeric);

// Checkpoints: one record per tensor, "<name> <rows> <cols>" followed by the
// row-major values as hex floats. Round-trips bit-exactly.
void write_tensor(std::ostream& os, const std::string& name, const Matrix& m);
void write_tensor(std::ostream& os, const std::string& name, const Vector& v);
std::pair<std::string, Matrix> read_tensor(std::istream& is);

void save_params(std::ostream& os, const std::string& prefix, const MlpParams& params);
/// Reads tensors written by save_params() into a net of the same shape.
void load_params(std::istream& is, const std::string& prefix, MlpParams& params);

}  // namespace sop::nn
