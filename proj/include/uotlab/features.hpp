// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_FEATURES_HPP_
#define UOTLAB_FEATURES_HPP_

#include <span>
#include <string>
#include <vector>

#include "uotlab/flowmap.hpp"
#include "uotlab/gmm.hpp"
#include "uotlab/mlp.hpp"

namespace uotlab {

enum class FeatureKind { RawIdentity, ClassifierPenultimate };
enum class DistanceKind { Cosine, Euclidean };

const char* feature_kind_name(FeatureKind k);
FeatureKind feature_kind_from_name(const std::string& name);
const char* distance_kind_name(DistanceKind k);
DistanceKind distance_kind_from_name(const std::string& name);

// Frozen feature map f(x). ClassifierPenultimate evaluates a trained
// classifier up to (and including) its last hidden activation.
struct FeatureExtractor {
  FeatureKind kind = FeatureKind::RawIdentity;
  int input_dim = 0;
  int feature_dim = 0;

  // full classifier (empty for RawIdentity), plus the cached trunk that
  // computes the penultimate activations
  MlpSpec classifier_spec;
  ParamStore classifier_params;
  MlpSpec trunk_spec;
  ParamStore trunk_params;
  double holdout_accuracy = 1.0;

  DenseMatrix features(const DenseMatrix& x) const;
  // gradients of a scalar loss with per-feature partials `upstream`
  // back to the extractor input (parameters stay frozen)
  DenseMatrix features_input_grad(const DenseMatrix& x, const DenseMatrix& upstream) const;

  uint64_t content_hash() const;

  static FeatureExtractor raw_identity(int dim);
  static FeatureExtractor from_classifier(MlpSpec spec, ParamStore params, double holdout_accuracy);
};

struct ClassifierTrainConfig {
  int train_samples = 12288;
  int holdout_samples = 3072;
  int iterations = 3000;
  int batch = 128;
  double lr = 1e-3;
  double accuracy_floor = 0.98;
  double k_sigma = 3.0;  // label rule for generated samples
  int hidden_width = 32;
  int hidden_layers = 2;
  uint64_t seed = 11;
};

// Trains a small cross-entropy classifier on generated samples labeled by
// nearest_mode and wraps its penultimate layer. Fails if the held-out
// accuracy floor is not reached.
FeatureExtractor train_feature_classifier(const OneStepGenerator& gen, const GmmSpec& spec,
                                          const ClassifierTrainConfig& config);

struct ForgetAnchor {
  std::vector<double> mu_f;
  long source_sample_count = 0;
};

ForgetAnchor compute_anchor(const FeatureExtractor& extractor, const DenseMatrix& forget_samples);

double cosine_distance(std::span<const double> a, std::span<const double> b);
double feature_distance(DistanceKind kind, std::span<const double> a, std::span<const double> b);

struct CostConfig {
  double lambda = 1.0;
  double tau = 1.0;
  double margin = 0.34;
  DistanceKind distance = DistanceKind::Cosine;

  void validate() const;
};

bool in_forget_region(std::span<const double> x, const FeatureExtractor& extractor,
                      const ForgetAnchor& anchor, const CostConfig& cfg);

struct CostResult {
  double cost = 0.0;
  bool in_region = false;
};

// Unlearning cost: a hinge on the anchor distance inside the active forget
// region (membership decided on x_cur only), squared L2 transport outside.
CostResult unlearn_cost(std::span<const double> x_pre, std::span<const double> x_cur,
                        const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                        const CostConfig& cfg);

// Batch evaluation used by the trainers; keeps the per-row features and
// anchor distances so gradient passes can reuse them.
struct CostBatch {
  std::vector<double> cost;
  std::vector<uint8_t> in_region;
  std::vector<double> anchor_distance;
  DenseMatrix features_cur;
  long region_hits = 0;
};

CostBatch unlearn_cost_batch(const DenseMatrix& x_pre, const DenseMatrix& x_cur,
                             const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                             const CostConfig& cfg);

// d distance(f(x), mu_f) / d f(x) for one feature row; used by the
// generator update inside the forget region.
std::vector<double> anchor_distance_feature_grad(DistanceKind kind, std::span<const double> feature,
                                                 std::span<const double> mu_f);

// Margin calibration: the given percentile of anchor distances over held-out
// forget-class samples, clamped to [0.05, 1.0]. Deterministic.
double calibrate_margin(const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                        const DenseMatrix& holdout_forget_samples, DistanceKind kind,
                        double percentile = 0.95);

}  // namespace uotlab

#endif  // UOTLAB_FEATURES_HPP_
