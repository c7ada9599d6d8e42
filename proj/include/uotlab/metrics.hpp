// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_METRICS_HPP_
#define UOTLAB_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "uotlab/flowmap.hpp"
#include "uotlab/gmm.hpp"

namespace uotlab {

struct EvalConfig {
  int n_samples = 30000;
  uint64_t seed = 77;
  double k_sigma = 3.0;
};

struct EvalReport {
  double pul_percent = 0.0;
  double frechet_full = 0.0;
  double frechet_retain = 0.0;
  std::vector<double> mode_masses;  // within-k-sigma fraction per mode
  double oos_mass = 0.0;            // remainder; masses partition the sample set
  long forget_count = 0;
  int n_samples = 0;
  uint64_t seed = 0;
};

// Number of samples whose nearest mode within k_sigma is forget_index.
long count_forget(const DenseMatrix& samples, const GmmSpec& spec, int forget_index, double k_sigma);

// Percentage of unlearning: relative reduction in forget-class generation,
// (n_pre - n_unl) / n_pre * 100. Negative when the class grew.
double pul(long n_pre, long n_unl);

// Frechet distance between Gaussian fits of two sample sets:
// |mean_X - mean_Y|^2 + tr(S_X + S_Y - 2 (S_X S_Y)^{1/2}), with the matrix
// square root taken by eigendecomposition.
double frechet_gaussian(const DenseMatrix& x, const DenseMatrix& y);

// Draws n samples from the generator at the fixed eval seed and computes all
// report fields. PUL uses the supplied pretrained forget count; when absent
// the report's own count is the baseline (PUL 0). Evaluation labeling is
// nearest_mode only; the training feature extractor is never consulted.
EvalReport evaluate(const OneStepGenerator& gen, std::optional<long> pretrained_forget_count,
                    const GmmSpec& spec, int forget_index, const EvalConfig& cfg);

// Same metrics for an already-generated sample matrix.
EvalReport evaluate_samples(const DenseMatrix& samples, std::optional<long> pretrained_forget_count,
                            const GmmSpec& spec, int forget_index, const EvalConfig& cfg);

}  // namespace uotlab

#endif  // UOTLAB_METRICS_HPP_
