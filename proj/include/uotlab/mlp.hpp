// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_MLP_HPP_
#define UOTLAB_MLP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "uotlab/dense_matrix.hpp"

namespace uotlab {

enum class Activation { Identity, ReLU, LeakyReLU, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fixed-topology multilayer perceptron: layer_widths[0] inputs through
// layer_widths.back() outputs, one affine map per adjacent pair.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation hidden_activation = Activation::ReLU;
  Activation output_activation = Activation::Identity;
  double leaky_slope = 0.2;

  void validate() const;
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  int layer_count() const { return static_cast<int>(layer_widths.size()) - 1; }

  bool operator==(const MlpSpec&) const = default;

  static MlpSpec make(std::vector<int> widths, Activation hidden,
                      Activation output = Activation::Identity, double slope = 0.2);
};

// Weights W_l are [in x out]; biases b_l are [1 x out]. A layer computes
// y = act(x W + b) on row-major batches.
struct ParamStore {
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;

  size_t total_parameters() const;
  bool same_shape(const ParamStore& o) const;
  bool all_finite() const;

  void fill(double value);
  void add_scaled(const ParamStore& other, double factor);  // this += factor * other
  double dot(const ParamStore& other) const;
  double max_abs() const;
  uint64_t content_hash() const;

  static ParamStore zeros(const MlpSpec& spec);
  // Uniform Kaiming-style init scaled by fan-in, biases zero.
  static ParamStore kaiming_uniform(const MlpSpec& spec, uint64_t seed);
};

DenseMatrix mlp_forward(const MlpSpec& spec, const ParamStore& params,
                        const DenseMatrix& input);

// Cached forward pass for backprop: pre[l] holds pre-activations of layer l,
// act[l] the activations feeding layer l (act[0] is the input).
struct ForwardTrace {
  std::vector<DenseMatrix> pre;
  std::vector<DenseMatrix> act;
  const DenseMatrix& output() const { return act.back(); }
};

ForwardTrace mlp_forward_trace(const MlpSpec& spec, const ParamStore& params,
                               const DenseMatrix& input);

struct MlpGradients {
  ParamStore params;
  DenseMatrix input;
};

// Reverse-mode gradients of the scalar loss whose per-output partials are
// `upstream` ([batch x out]), with respect to all parameters and the input.
MlpGradients mlp_backward(const MlpSpec& spec, const ParamStore& params,
                          const ForwardTrace& trace, const DenseMatrix& upstream);
MlpGradients mlp_backward(const MlpSpec& spec, const ParamStore& params,
                          const DenseMatrix& input, const DenseMatrix& upstream);

}  // namespace uotlab

#endif  // UOTLAB_MLP_HPP_
