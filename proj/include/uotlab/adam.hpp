// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_ADAM_HPP_
#define UOTLAB_ADAM_HPP_

#include "uotlab/mlp.hpp"

namespace uotlab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParamStore first_moment;
  ParamStore second_moment;
  long step = 0;

  static AdamState create(const MlpSpec& spec, const AdamConfig& config);
};

// Standard bias-corrected Adam update. An all-zero gradient leaves the
// parameters untouched regardless of accumulated moments.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

// ema <- decay * ema + (1 - decay) * current, elementwise.
void ema_update(ParamStore& ema, const ParamStore& current, double decay);

}  // namespace uotlab

#endif  // UOTLAB_ADAM_HPP_
