#pragma once

#include "shellflow/common.hpp"

#include <cstdint>
#include <vector>

namespace shellflow {

enum class ModelKind { Mlp, RandomFeatures };
enum class Activation { Tanh, Relu, Identity };
enum class Integrator { Euler, Rk4 };

/// Architecture + deterministic initialization recipe for a tiny model.
///
/// For `Mlp`, `layer_widths` lists every layer width including input and the
/// scalar output, e.g. {1, 8, 1}. For `RandomFeatures` the single entry of
/// `layer_widths` is the input dimension; the feature map is a fixed random
/// projection derived from `seed` and only the linear head is trainable.
struct ModelSpec {
  ModelKind kind = ModelKind::Mlp;
  std::vector<int> layer_widths{1, 8, 1};
  Activation activation = Activation::Tanh;
  int feature_count = 0;       // random-features only
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;       // throws ConfigError
  int input_dim() const;
  int parameter_count() const;
};

struct NetworkState {
  VectorXd params;
  ModelSpec spec;
};

/// Finite sample set standing in for the data distribution. Weights are
/// strictly positive and sum to one; all inner products and losses are taken
/// in this weighted geometry.
struct SampleSet {
  MatrixXd inputs;   // n x d
  VectorXd targets;  // n
  VectorXd weights;  // n, > 0, sums to 1

  void validate() const;
  int size() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }

  static SampleSet with_uniform_weights(MatrixXd inputs, VectorXd targets);
};

struct ErrorVector {
  VectorXd values;
  double timestamp = 0.0;
};

/// Draw parameters deterministically from the spec seed. Entries are standard
/// normal scaled by init_scale / sqrt(fan_in) per layer.
NetworkState init_network(const ModelSpec& spec);

/// Fixed random feature map phi(x) for a random-features spec, one row per
/// sample, `feature_count` columns. Regenerated bit-identically from the seed.
MatrixXd feature_matrix(const ModelSpec& spec, const MatrixXd& inputs);

VectorXd forward(const NetworkState& net, const SampleSet& samples);

/// Row i holds the gradient of the scalar output at sample i with respect to
/// every parameter (n x N), from exact layer-wise reverse accumulation.
MatrixXd jacobian(const NetworkState& net, const SampleSet& samples);

ErrorVector error_vector(const NetworkState& net, const SampleSet& samples, double t);

double loss_value(const NetworkState& net, const SampleSet& samples);

/// Gradient of the weighted half-MSE loss with respect to the parameters.
VectorXd loss_gradient(const NetworkState& net, const SampleSet& samples);

struct StepResult {
  NetworkState net;
  double loss;  // after the step
};

/// One explicit gradient-flow step theta <- theta - dt * grad L. Rk4 applies
/// the classical four-stage rule to the same vector field. Throws
/// DivergenceError on non-finite gradients.
StepResult gradient_flow_step(const NetworkState& net, const SampleSet& samples,
                              double dt, Integrator integrator = Integrator::Euler);

}  // namespace shellflow
