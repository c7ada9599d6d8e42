// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_FINITE_DIFF_HPP_
#define UOTLAB_FINITE_DIFF_HPP_

#include <functional>

#include "uotlab/mlp.hpp"

namespace uotlab {

// A differentiable scalar loss over a parameter store: `value` evaluates it,
// `gradient` returns the analytic gradient under test.
struct LossProbe {
  std::function<double(const ParamStore&)> value;
  std::function<ParamStore(const ParamStore&)> gradient;
};

// Central-difference check of `gradient` against `value` over every
// parameter. Returns the worst relative error, with denominator
// |analytic| + |numeric| + 1e-12.
double finite_diff_check(const MlpSpec& spec, const ParamStore& params, const LossProbe& loss,
                         double h);

}  // namespace uotlab

#endif  // UOTLAB_FINITE_DIFF_HPP_
