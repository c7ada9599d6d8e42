// SPDX-License-Identifier: Apache-2.0
#include "uotlab/mlp.hpp"

#include <cmath>
#include <cstring>

#include "eigen_map.hpp"
#include "uotlab/rng.hpp"

namespace uotlab {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::LeakyReLU: return "leaky_relu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "leaky_relu") return Activation::LeakyReLU;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError(strf("unknown activation '%s'", name.c_str()));
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError(strf("MlpSpec: needs at least 2 layer widths, got %zu", layer_widths.size()));
  }
  for (int w : layer_widths) {
    if (w < 1) throw ConfigError(strf("MlpSpec: layer width %d < 1", w));
  }
}

MlpSpec MlpSpec::make(std::vector<int> widths, Activation hidden, Activation output, double slope) {
  MlpSpec spec;
  spec.layer_widths = std::move(widths);
  spec.hidden_activation = hidden;
  spec.output_activation = output;
  spec.leaky_slope = slope;
  spec.validate();
  return spec;
}

size_t ParamStore::total_parameters() const {
  size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

bool ParamStore::same_shape(const ParamStore& o) const {
  if (weights.size() != o.weights.size() || biases.size() != o.biases.size()) return false;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].same_shape(o.weights[l]) || !biases[l].same_shape(o.biases[l])) return false;
  }
  return true;
}

bool ParamStore::all_finite() const {
  for (const auto& w : weights)
    if (!w.all_finite()) return false;
  for (const auto& b : biases)
    if (!b.all_finite()) return false;
  return true;
}

void ParamStore::fill(double value) {
  for (auto& w : weights) std::fill(w.data.begin(), w.data.end(), value);
  for (auto& b : biases) std::fill(b.data.begin(), b.data.end(), value);
}

void ParamStore::add_scaled(const ParamStore& other, double factor) {
  if (!same_shape(other)) throw ShapeError("ParamStore::add_scaled: shape mismatch");
  for (size_t l = 0; l < weights.size(); ++l) {
    for (size_t i = 0; i < weights[l].data.size(); ++i) weights[l].data[i] += factor * other.weights[l].data[i];
    for (size_t i = 0; i < biases[l].data.size(); ++i) biases[l].data[i] += factor * other.biases[l].data[i];
  }
}

double ParamStore::dot(const ParamStore& other) const {
  if (!same_shape(other)) throw ShapeError("ParamStore::dot: shape mismatch");
  double acc = 0.0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (size_t i = 0; i < weights[l].data.size(); ++i) acc += weights[l].data[i] * other.weights[l].data[i];
    for (size_t i = 0; i < biases[l].data.size(); ++i) acc += biases[l].data[i] * other.biases[l].data[i];
  }
  return acc;
}

double ParamStore::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights)
    for (double v : w.data) m = std::max(m, std::fabs(v));
  for (const auto& b : biases)
    for (double v : b.data) m = std::max(m, std::fabs(v));
  return m;
}

uint64_t ParamStore::content_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& w : weights) h = fnv1a64(w.data.data(), w.data.size() * sizeof(double), h);
  for (const auto& b : biases) h = fnv1a64(b.data.data(), b.data.size() * sizeof(double), h);
  return h;
}

ParamStore ParamStore::zeros(const MlpSpec& spec) {
  spec.validate();
  ParamStore p;
  for (int l = 0; l < spec.layer_count(); ++l) {
    p.weights.emplace_back(spec.layer_widths[l], spec.layer_widths[l + 1]);
    p.biases.emplace_back(1, spec.layer_widths[l + 1]);
  }
  return p;
}

ParamStore ParamStore::kaiming_uniform(const MlpSpec& spec, uint64_t seed) {
  ParamStore p = zeros(spec);
  Rng rng(seed);
  for (int l = 0; l < spec.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / spec.layer_widths[l]);
    for (double& v : p.weights[l].data) v = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return p;
}

namespace {

void check_params(const MlpSpec& spec, const ParamStore& params) {
  if (static_cast<int>(params.weights.size()) != spec.layer_count()) {
    throw ShapeError(strf("mlp: param store has %zu layers, spec expects %d", params.weights.size(),
                          spec.layer_count()));
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    const auto& w = params.weights[l];
    if (w.rows != spec.layer_widths[l] || w.cols != spec.layer_widths[l + 1]) {
      throw ShapeError(strf("mlp: layer %d weight is %d x %d, spec expects %d x %d", l, w.rows, w.cols,
                            spec.layer_widths[l], spec.layer_widths[l + 1]));
    }
    if (params.biases[l].cols != spec.layer_widths[l + 1] || params.biases[l].rows != 1) {
      throw ShapeError(strf("mlp: layer %d bias is %d x %d, spec expects 1 x %d", l, params.biases[l].rows,
                            params.biases[l].cols, spec.layer_widths[l + 1]));
    }
  }
}

void apply_activation(Activation a, double slope, DenseMatrix& z) {
  switch (a) {
    case Activation::Identity:
      return;
    case Activation::ReLU:
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::LeakyReLU:
      for (double& v : z.data) v = v > 0.0 ? v : slope * v;
      return;
    case Activation::Tanh:
      for (double& v : z.data) v = std::tanh(v);
      return;
  }
}

inline double activation_deriv(Activation a, double slope, double pre) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyReLU: return pre > 0.0 ? 1.0 : slope;
    case Activation::Tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w, const DenseMatrix& b) {
  DenseMatrix z(x.rows, w.cols);
  emap(z).noalias() = emap(x) * emap(w);
  Eigen::Map<const Eigen::RowVectorXd> bias(b.data.data(), b.cols);
  emap(z).rowwise() += bias;
  return z;
}

}  // namespace

ForwardTrace mlp_forward_trace(const MlpSpec& spec, const ParamStore& params, const DenseMatrix& input) {
  spec.validate();
  check_params(spec, params);
  if (input.cols != spec.input_width()) {
    throw ShapeError(strf("mlp_forward: input has %d cols, spec expects %d", input.cols, spec.input_width()));
  }
  ForwardTrace trace;
  const int layers = spec.layer_count();
  trace.pre.reserve(layers);
  trace.act.reserve(layers + 1);
  trace.act.push_back(input);
  for (int l = 0; l < layers; ++l) {
    DenseMatrix z = affine(trace.act.back(), params.weights[l], params.biases[l]);
    trace.pre.push_back(z);
    const Activation a = (l + 1 == layers) ? spec.output_activation : spec.hidden_activation;
    apply_activation(a, spec.leaky_slope, z);
    trace.act.push_back(std::move(z));
  }
  return trace;
}

DenseMatrix mlp_forward(const MlpSpec& spec, const ParamStore& params, const DenseMatrix& input) {
  spec.validate();
  check_params(spec, params);
  if (input.cols != spec.input_width()) {
    throw ShapeError(strf("mlp_forward: input has %d cols, spec expects %d", input.cols, spec.input_width()));
  }
  DenseMatrix cur = input;
  const int layers = spec.layer_count();
  for (int l = 0; l < layers; ++l) {
    DenseMatrix z = affine(cur, params.weights[l], params.biases[l]);
    const Activation a = (l + 1 == layers) ? spec.output_activation : spec.hidden_activation;
    apply_activation(a, spec.leaky_slope, z);
    cur = std::move(z);
  }
  return cur;
}

MlpGradients mlp_backward(const MlpSpec& spec, const ParamStore& params, const ForwardTrace& trace,
                          const DenseMatrix& upstream) {
  const int layers = spec.layer_count();
  const DenseMatrix& out = trace.act.back();
  if (!upstream.same_shape(out)) {
    throw ShapeError(strf("mlp_backward: upstream is %d x %d, output is %d x %d", upstream.rows,
                          upstream.cols, out.rows, out.cols));
  }
  MlpGradients grads;
  grads.params = ParamStore::zeros(spec);

  // delta = dLoss/d(pre-activation of current layer)
  DenseMatrix delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    const Activation a = (l + 1 == layers) ? spec.output_activation : spec.hidden_activation;
    const DenseMatrix& pre = trace.pre[l];
    for (size_t i = 0; i < delta.data.size(); ++i) {
      delta.data[i] *= activation_deriv(a, spec.leaky_slope, pre.data[i]);
    }
    const DenseMatrix& below = trace.act[l];
    emap(grads.params.weights[l]).noalias() = emap(below).transpose() * emap(delta);
    Eigen::Map<Eigen::RowVectorXd>(grads.params.biases[l].data.data(), grads.params.biases[l].cols) =
        emap(delta).colwise().sum();
    DenseMatrix next(delta.rows, spec.layer_widths[l]);
    emap(next).noalias() = emap(delta) * emap(params.weights[l]).transpose();
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

MlpGradients mlp_backward(const MlpSpec& spec, const ParamStore& params, const DenseMatrix& input,
                          const DenseMatrix& upstream) {
  return mlp_backward(spec, params, mlp_forward_trace(spec, params, input), upstream);
}

}  // namespace uotlab
