// SPDX-License-Identifier: Apache-2.0
#include "uotlab/adam.hpp"

#include <cmath>

namespace uotlab {

AdamState AdamState::create(const MlpSpec& spec, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment = ParamStore::zeros(spec);
  state.second_moment = ParamStore::zeros(spec);
  return state;
}

namespace {

bool layer_all_zero(const DenseMatrix& m) {
  for (double v : m.data)
    if (v != 0.0) return false;
  return true;
}

void check_layer_finite(const DenseMatrix& g, const char* kind, size_t layer) {
  if (!g.all_finite()) {
    throw NonFiniteError(strf("adam_step: non-finite gradient in %s of layer %zu", kind, layer));
  }
}

void update_block(DenseMatrix& p, const DenseMatrix& g, DenseMatrix& m, DenseMatrix& v,
                  const AdamConfig& cfg, double corr1, double corr2) {
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double gi = g.data[i];
    m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
    v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = m.data[i] / corr1;
    const double vhat = v.data[i] / corr2;
    p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment)) {
    throw ShapeError("adam_step: parameter/gradient/state shape mismatch");
  }
  bool all_zero = true;
  for (size_t l = 0; l < grads.weights.size(); ++l) {
    check_layer_finite(grads.weights[l], "weights", l);
    check_layer_finite(grads.biases[l], "biases", l);
    all_zero = all_zero && layer_all_zero(grads.weights[l]) && layer_all_zero(grads.biases[l]);
  }
  state.step += 1;
  if (all_zero) {
    // parameters must stay bit-identical; moments decay as usual
    for (size_t l = 0; l < grads.weights.size(); ++l) {
      for (double& m : state.first_moment.weights[l].data) m *= state.config.beta1;
      for (double& m : state.first_moment.biases[l].data) m *= state.config.beta1;
      for (double& v : state.second_moment.weights[l].data) v *= state.config.beta2;
      for (double& v : state.second_moment.biases[l].data) v *= state.config.beta2;
    }
    return;
  }
  const double corr1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
  for (size_t l = 0; l < params.weights.size(); ++l) {
    update_block(params.weights[l], grads.weights[l], state.first_moment.weights[l],
                 state.second_moment.weights[l], state.config, corr1, corr2);
    update_block(params.biases[l], grads.biases[l], state.first_moment.biases[l],
                 state.second_moment.biases[l], state.config, corr1, corr2);
  }
  if (!params.all_finite()) throw NonFiniteError("adam_step: parameters non-finite after update");
}

void ema_update(ParamStore& ema, const ParamStore& current, double decay) {
  if (decay < 0.0 || decay > 1.0) throw ConfigError(strf("ema_update: decay %g outside [0, 1]", decay));
  if (!ema.same_shape(current)) throw ShapeError("ema_update: shape mismatch");
  for (size_t l = 0; l < ema.weights.size(); ++l) {
    for (size_t i = 0; i < ema.weights[l].data.size(); ++i) {
      ema.weights[l].data[i] = decay * ema.weights[l].data[i] + (1.0 - decay) * current.weights[l].data[i];
    }
    for (size_t i = 0; i < ema.biases[l].data.size(); ++i) {
      ema.biases[l].data[i] = decay * ema.biases[l].data[i] + (1.0 - decay) * current.biases[l].data[i];
    }
  }
}

}  // namespace uotlab
