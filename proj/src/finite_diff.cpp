// SPDX-License-Identifier: Apache-2.0
#include "uotlab/finite_diff.hpp"

#include <cmath>

namespace uotlab {

namespace {

double check_block(DenseMatrix& block, const DenseMatrix& grad_block, ParamStore& work,
                   const LossProbe& loss, double h) {
  double worst = 0.0;
  for (size_t i = 0; i < block.data.size(); ++i) {
    const double saved = block.data[i];
    block.data[i] = saved + h;
    const double up = loss.value(work);
    block.data[i] = saved - h;
    const double down = loss.value(work);
    block.data[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad_block.data[i];
    const double rel = std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

double finite_diff_check(const MlpSpec& spec, const ParamStore& params, const LossProbe& loss, double h) {
  if (h <= 0.0) throw ConfigError(strf("finite_diff_check: h = %g must be positive", h));
  spec.validate();
  ParamStore work = params;
  const ParamStore analytic = loss.gradient(work);
  double worst = 0.0;
  for (size_t l = 0; l < work.weights.size(); ++l) {
    worst = std::max(worst, check_block(work.weights[l], analytic.weights[l], work, loss, h));
    worst = std::max(worst, check_block(work.biases[l], analytic.biases[l], work, loss, h));
  }
  return worst;
}

}  // namespace uotlab
