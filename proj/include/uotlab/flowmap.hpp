// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_FLOWMAP_HPP_
#define UOTLAB_FLOWMAP_HPP_

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "uotlab/adam.hpp"
#include "uotlab/mlp.hpp"
#include "uotlab/rng.hpp"

namespace uotlab {

// Time-dependent velocity field v(x, t); the network input is the
// concatenation [x, t].
struct VelocityField {
  MlpSpec spec;
  ParamStore params;
  int data_dim = 0;

  void validate() const;
};

// Noise-to-data map applied in a single forward pass.
struct OneStepGenerator {
  MlpSpec spec;
  ParamStore params;
  std::optional<ParamStore> ema_params;
  int data_dim = 0;

  void validate() const;
};

enum class OdeScheme { Euler, Heun };

// Produces a [n x dim] batch; drives all stochastic inputs of the trainers
// so tests can substitute degenerate distributions.
using BatchSampler = std::function<DenseMatrix(int n, Rng& rng)>;

BatchSampler normal_prior_sampler(int dim);

struct CfmConfig {
  int iterations = 20000;
  int batch = 256;
  double lr = 1e-3;
  double lr_final = 2e-5;  // cosine decay endpoint
  uint64_t seed = 1;
  int log_every = 250;
  std::vector<int> hidden_widths = {64, 64};
  Activation hidden_activation = Activation::Tanh;
};

struct CfmResult {
  VelocityField field;
  double final_loss = 0.0;
  std::vector<std::pair<long, double>> loss_log;  // (iteration, running mean loss)
};

// Conditional flow matching: regresses v(x_t, t) onto x1 - x0 along the
// straight interpolant x_t = (1-t) x0 + t x1.
CfmResult cfm_train_velocity(const BatchSampler& data, const BatchSampler& prior, int data_dim,
                             const CfmConfig& config);

// Uniform-step integration of dx = v(x, t) dt from t=0 to t=1.
DenseMatrix integrate_ode(const VelocityField& field, const DenseMatrix& x0, int n_steps,
                          OdeScheme scheme);

struct DistillConfig {
  int iterations = 10000;
  int batch = 256;
  double lr = 1e-3;
  double lr_final = 2e-5;  // cosine decay endpoint
  int teacher_steps = 50;
  OdeScheme scheme = OdeScheme::Heun;
  int pool_size = 131072;   // teacher-solved pairs the regression trains on
  int holdout_size = 4096;  // extra pairs reserved for the residual check
  uint64_t seed = 2;
  int log_every = 250;
  std::vector<int> hidden_widths = {128, 128, 128};
  Activation hidden_activation = Activation::LeakyReLU;
};

struct DistillResult {
  OneStepGenerator generator;
  double train_residual = 0.0;    // mean squared error on trained pairs
  double holdout_residual = 0.0;  // mean squared error on held-out pairs
  std::vector<std::pair<long, double>> loss_log;
};

// Distills the ODE solution map into a single forward pass by regression
// onto teacher targets integrate_ode(field, x0, teacher_steps).
DistillResult distill_flowmap(const VelocityField& field, const BatchSampler& prior,
                              const DistillConfig& config);

// Samples prior noise and applies one forward pass.
DenseMatrix generate(const OneStepGenerator& gen, int n, uint64_t seed, bool use_ema = false);
DenseMatrix generate_from(const OneStepGenerator& gen, const DenseMatrix& noise, bool use_ema = false);

}  // namespace uotlab

#endif  // UOTLAB_FLOWMAP_HPP_
