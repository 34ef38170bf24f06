#include "shellflow/netlab.hpp"

#include <algorithm>
#include <cmath>

namespace shellflow {

namespace {

double activate(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Identity: return z;
  }
  return z;
}

double activate_prime(Activation act, double z) {
  switch (act) {
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

// Random-features projection: W (P x d) with N(0,1)/sqrt(d) entries, then the
// bias vector with unit normals. Draw order is fixed so the map is a pure
// function of the seed.
struct FeatureProjection {
  MatrixXd weights;  // P x d
  VectorXd bias;     // P
};

FeatureProjection feature_projection(const ModelSpec& spec) {
  const int d = spec.input_dim();
  const int p = spec.feature_count;
  std::mt19937_64 rng = seeded_rng(spec.seed, 0x66ea7u);
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureProjection proj;
  proj.weights.resize(p, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) proj.weights(i, j) = normal(rng) * scale;
  proj.bias.resize(p);
  for (int i = 0; i < p; ++i) proj.bias(i) = normal(rng);
  return proj;
}

}  // namespace

void ModelSpec::validate() const {
  if (init_scale <= 0.0) throw ConfigError("ModelSpec: init_scale must be > 0");
  if (kind == ModelKind::Mlp) {
    if (layer_widths.size() < 2)
      throw ConfigError("ModelSpec: mlp needs at least input and output widths");
    for (int w : layer_widths)
      if (w < 1) throw ConfigError("ModelSpec: layer widths must be >= 1");
    if (layer_widths.back() != 1)
      throw ConfigError("ModelSpec: scalar output expected (last width 1)");
  } else {
    if (layer_widths.size() != 1 || layer_widths[0] < 1)
      throw ConfigError("ModelSpec: random-features expects layer_widths = {input_dim}");
    if (feature_count < 1)
      throw ConfigError("ModelSpec: feature_count must be >= 1");
  }
}

int ModelSpec::input_dim() const {
  return layer_widths.front();
}

int ModelSpec::parameter_count() const {
  if (kind == ModelKind::RandomFeatures) return feature_count;
  int n = 0;
  for (std::size_t l = 1; l < layer_widths.size(); ++l)
    n += layer_widths[l] * (layer_widths[l - 1] + 1);
  return n;
}

void SampleSet::validate() const {
  const int n = size();
  if (n == 0) throw ConfigError("SampleSet: empty");
  if (targets.size() != n || weights.size() != n)
    throw ConfigError("SampleSet: targets/weights size mismatch");
  if (!targets.allFinite() || !inputs.allFinite())
    throw ConfigError("SampleSet: non-finite entries");
  if ((weights.array() <= 0.0).any())
    throw ConfigError("SampleSet: weights must be strictly positive");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw ConfigError("SampleSet: weights must sum to 1");
}

SampleSet SampleSet::with_uniform_weights(MatrixXd inputs, VectorXd targets) {
  SampleSet s;
  const auto n = inputs.rows();
  s.inputs = std::move(inputs);
  s.targets = std::move(targets);
  s.weights = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  s.validate();
  return s;
}

NetworkState init_network(const ModelSpec& spec) {
  spec.validate();
  NetworkState net;
  net.spec = spec;
  net.params.resize(spec.parameter_count());

  std::mt19937_64 rng = seeded_rng(spec.seed, 0x1417u);
  std::normal_distribution<double> normal(0.0, 1.0);

  if (spec.kind == ModelKind::RandomFeatures) {
    const double scale = spec.init_scale / std::sqrt(static_cast<double>(spec.feature_count));
    for (int i = 0; i < net.params.size(); ++i) net.params(i) = normal(rng) * scale;
    return net;
  }

  int offset = 0;
  for (std::size_t l = 1; l < spec.layer_widths.size(); ++l) {
    const int fan_in = spec.layer_widths[l - 1];
    const int fan_out = spec.layer_widths[l];
    const double scale = spec.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < fan_out * (fan_in + 1); ++i) net.params(offset + i) = normal(rng) * scale;
    offset += fan_out * (fan_in + 1);
  }
  return net;
}

MatrixXd feature_matrix(const ModelSpec& spec, const MatrixXd& inputs) {
  spec.validate();
  if (spec.kind != ModelKind::RandomFeatures)
    throw ConfigError("feature_matrix: spec is not random-features");
  if (inputs.cols() != spec.input_dim())
    throw ConfigError("feature_matrix: input dimension mismatch");
  const FeatureProjection proj = feature_projection(spec);
  MatrixXd pre = inputs * proj.weights.transpose();  // n x P
  pre.rowwise() += proj.bias.transpose();
  for (Eigen::Index i = 0; i < pre.rows(); ++i)
    for (Eigen::Index j = 0; j < pre.cols(); ++j)
      pre(i, j) = activate(spec.activation, pre(i, j));
  return pre;
}

namespace {

// Layer parameter layout: per layer l, W^l row-major (fan_out x fan_in) then
// the bias b^l, concatenated over layers.
struct MlpView {
  const ModelSpec* spec;
  int weight_offset(int layer) const {
    int off = 0;
    for (int l = 1; l < layer; ++l)
      off += spec->layer_widths[l] * (spec->layer_widths[l - 1] + 1);
    return off;
  }
};

VectorXd mlp_forward_one(const ModelSpec& spec, const VectorXd& params, const VectorXd& x,
                         std::vector<VectorXd>* pre_acts, std::vector<VectorXd>* acts) {
  const int layers = static_cast<int>(spec.layer_widths.size()) - 1;
  VectorXd a = x;
  if (acts) acts->push_back(a);
  int offset = 0;
  for (int l = 1; l <= layers; ++l) {
    const int fan_in = spec.layer_widths[l - 1];
    const int fan_out = spec.layer_widths[l];
    Eigen::Map<const MatrixXd> wt(params.data() + offset, fan_in, fan_out);
    Eigen::Map<const VectorXd> b(params.data() + offset + fan_in * fan_out, fan_out);
    VectorXd z = wt.transpose() * a + b;
    if (pre_acts) pre_acts->push_back(z);
    if (l < layers) {
      a.resize(fan_out);
      for (int i = 0; i < fan_out; ++i) a(i) = activate(spec.activation, z(i));
    } else {
      a = z;  // linear output layer
    }
    if (acts) acts->push_back(a);
    offset += fan_out * (fan_in + 1);
  }
  return a;
}

}  // namespace

VectorXd forward(const NetworkState& net, const SampleSet& samples) {
  net.spec.validate();
  samples.validate();
  if (samples.dim() != net.spec.input_dim())
    throw ConfigError("forward: input dimension mismatch");
  if (net.params.size() != net.spec.parameter_count())
    throw ConfigError("forward: parameter vector length mismatch");

  const int n = samples.size();
  VectorXd out(n);
  if (net.spec.kind == ModelKind::RandomFeatures) {
    out = feature_matrix(net.spec, samples.inputs) * net.params;
    return out;
  }
  for (int i = 0; i < n; ++i)
    out(i) = mlp_forward_one(net.spec, net.params, samples.inputs.row(i).transpose(),
                             nullptr, nullptr)(0);
  return out;
}

MatrixXd jacobian(const NetworkState& net, const SampleSet& samples) {
  net.spec.validate();
  samples.validate();
  if (samples.dim() != net.spec.input_dim())
    throw ConfigError("jacobian: input dimension mismatch");
  if (net.params.size() != net.spec.parameter_count())
    throw ConfigError("jacobian: parameter vector length mismatch");

  if (net.spec.kind == ModelKind::RandomFeatures)
    return feature_matrix(net.spec, samples.inputs);

  const ModelSpec& spec = net.spec;
  const int n = samples.size();
  const int nparams = spec.parameter_count();
  const int layers = static_cast<int>(spec.layer_widths.size()) - 1;
  MatrixXd jac(n, nparams);

  for (int i = 0; i < n; ++i) {
    std::vector<VectorXd> pre, act;
    mlp_forward_one(spec, net.params, samples.inputs.row(i).transpose(), &pre, &act);

    // delta^l = d out / d z^l, backward from the linear output layer.
    std::vector<VectorXd> delta(layers);
    delta[layers - 1] = VectorXd::Ones(1);
    int offset_end = nparams;
    for (int l = layers; l >= 1; --l) {
      const int fan_in = spec.layer_widths[l - 1];
      const int fan_out = spec.layer_widths[l];
      offset_end -= fan_out * (fan_in + 1);
      Eigen::Map<const MatrixXd> wt(net.params.data() + offset_end, fan_in, fan_out);
      if (l > 1) {
        VectorXd back = wt * delta[l - 1];
        const VectorXd& z_prev = pre[l - 2];
        VectorXd d(fan_in);
        for (int k = 0; k < fan_in; ++k) d(k) = back(k) * activate_prime(spec.activation, z_prev(k));
        delta[l - 2] = std::move(d);
      }
    }

    int offset = 0;
    for (int l = 1; l <= layers; ++l) {
      const int fan_in = spec.layer_widths[l - 1];
      const int fan_out = spec.layer_widths[l];
      const VectorXd& a_prev = act[l - 1];
      const VectorXd& d = delta[l - 1];
      // W^l is stored column-major as (fan_in x fan_out) map: entry (k, r)
      // multiplies a_prev(k) into unit r.
      for (int r = 0; r < fan_out; ++r)
        for (int k = 0; k < fan_in; ++k) jac(i, offset + r * fan_in + k) = d(r) * a_prev(k);
      for (int r = 0; r < fan_out; ++r) jac(i, offset + fan_in * fan_out + r) = d(r);
      offset += fan_out * (fan_in + 1);
    }
  }
  return jac;
}

ErrorVector error_vector(const NetworkState& net, const SampleSet& samples, double t) {
  ErrorVector e;
  e.values = samples.targets - forward(net, samples);
  e.timestamp = t;
  return e;
}

double loss_value(const NetworkState& net, const SampleSet& samples) {
  const VectorXd e = samples.targets - forward(net, samples);
  return 0.5 * weighted_norm_sq(e, samples.weights);
}

VectorXd loss_gradient(const NetworkState& net, const SampleSet& samples) {
  const VectorXd e = samples.targets - forward(net, samples);
  const MatrixXd jac = jacobian(net, samples);
  return -jac.transpose() * samples.weights.cwiseProduct(e);
}

StepResult gradient_flow_step(const NetworkState& net, const SampleSet& samples,
                              double dt, Integrator integrator) {
  if (!(dt > 0.0)) throw ConfigError("gradient_flow_step: dt must be positive");

  const auto field = [&](const VectorXd& theta) {
    NetworkState probe{theta, net.spec};
    VectorXd g = -loss_gradient(probe, samples);
    if (!all_finite(g)) throw DivergenceError("gradient_flow_step: non-finite gradient");
    return g;
  };

  StepResult result;
  result.net.spec = net.spec;
  if (integrator == Integrator::Euler) {
    result.net.params = net.params + dt * field(net.params);
  } else {
    const VectorXd k1 = field(net.params);
    const VectorXd k2 = field(net.params + 0.5 * dt * k1);
    const VectorXd k3 = field(net.params + 0.5 * dt * k2);
    const VectorXd k4 = field(net.params + dt * k3);
    result.net.params = net.params + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!all_finite(result.net.params))
    throw DivergenceError("gradient_flow_step: non-finite parameters");
  result.loss = loss_value(result.net, samples);
  return result;
}

}  // namespace shellflow
