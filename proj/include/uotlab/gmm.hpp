// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_GMM_HPP_
#define UOTLAB_GMM_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uotlab/dense_matrix.hpp"

namespace uotlab {

struct GmmMode {
  std::vector<double> center;
  double weight = 0.0;
  double sigma = 0.0;  // isotropic spread
};

// The synthetic data distribution: an isotropic Gaussian mixture.
struct GmmSpec {
  int dimension = 0;
  std::vector<GmmMode> modes;

  void validate() const;
  int mode_count() const { return static_cast<int>(modes.size()); }

  // Mixture restricted to the complement of one mode, weights renormalized.
  GmmSpec without_mode(int index) const;

  // Three equal-weight modes at (0,1), (-1,-0.5), (1,-0.5), sigma 0.1.
  static GmmSpec default_three_modes();
};

struct LabeledSample {
  std::vector<double> point;
  int mode_index = -1;  // generating mode
};

// Mixture sampling; the label records the generating mode. Deterministic
// per (spec, n, seed).
std::vector<LabeledSample> sample_gmm(const GmmSpec& spec, int n, uint64_t seed);

// i.i.d. standard normal noise, one sample per row.
DenseMatrix sample_prior(int dimension, int n, uint64_t seed);

// Nearest mode by Euclidean distance if within k_sigma of that mode's
// sigma, otherwise nothing. Ties break to the lowest index.
std::optional<int> nearest_mode(std::span<const double> point, const GmmSpec& spec, double k_sigma);

DenseMatrix samples_to_matrix(const std::vector<LabeledSample>& samples);

// Counted access to the real data distribution. Training-facing real-data
// reads go through this class so the data-free contract of the unlearning
// loop can be checked by the instrumentation counter.
class DataSource {
 public:
  explicit DataSource(GmmSpec spec);

  const GmmSpec& spec() const { return spec_; }
  DenseMatrix sample(int n, uint64_t seed);             // full mixture
  DenseMatrix sample_mode(int mode, int n, uint64_t seed);  // one component
  long access_count() const { return accesses_; }

 private:
  GmmSpec spec_;
  long accesses_ = 0;
};

}  // namespace uotlab

#endif  // UOTLAB_GMM_HPP_
