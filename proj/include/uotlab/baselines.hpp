// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_BASELINES_HPP_
#define UOTLAB_BASELINES_HPP_

#include <functional>
#include <string>
#include <vector>

#include "uotlab/features.hpp"
#include "uotlab/flowmap.hpp"

namespace uotlab {

enum class BaselineMethod { GA, VDU, SA, SalUn };

const char* baseline_method_name(BaselineMethod m);
BaselineMethod baseline_method_from_name(const std::string& name);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::VDU;
  int iterations = 2000;
  double lr = 1.6e-4;  // mirrors the UOT generator learning rate
  double gamma = 0.005;
  double alpha = 0.1;
  double beta = 0.5;
  double lambda_sa = 5.0;
  double sparsity = 0.95;
  uint64_t seed = 5;
  int pseudo_set_size = 8192;
  int batch = 128;
  int teacher_steps = 50;
  OdeScheme scheme = OdeScheme::Heun;
  int fim_samples = 2048;
  // segmented fine-tune that substitutes for historical checkpoints
  int stat_segments = 4;
  int stat_steps_per_segment = 500;
  double stat_lr = 1e-6;
  int stat_batch = 128;
  int eval_every = 100;

  void validate() const;
};

// Per-parameter mean/stddev across the statistics snapshots.
struct ParamStatistics {
  ParamStore mean;
  ParamStore stddev;  // floored at sigma_floor
  int snapshot_count = 0;

  static constexpr double kSigmaFloor = 1e-6;
};

struct SaliencyMask {
  std::vector<std::vector<uint8_t>> weights;
  std::vector<std::vector<uint8_t>> biases;
  size_t selected_count = 0;
  double selected_fraction = 0.0;
};

struct PseudoSets {
  DenseMatrix forget_noise;    // noise whose G_pre output lands in the forget region
  DenseMatrix retain_noise;    // the rest
  DenseMatrix retain_samples;  // G_pre outputs of retain_noise (the pseudo-retain data)
  uint64_t seed = 0;
};

// Original training loss of the one-step model at desk scale: the flow-map
// regression against the frozen teacher ODE.
double per_sample_train_loss(const OneStepGenerator& gen, const VelocityField& teacher,
                             std::span<const double> x0, int teacher_steps = 50,
                             OdeScheme scheme = OdeScheme::Heun);

// Splits prior noise by the forget-region membership of the pretrained
// outputs. Fails when no noise maps into the region.
PseudoSets build_pseudo_sets(const OneStepGenerator& g_pre, const FeatureExtractor& extractor,
                             const ForgetAnchor& anchor, const CostConfig& cfg, int n, uint64_t seed);

// Periodic callback for metric trajectories; iter is 1-based.
using BaselineEvalHook = std::function<void(long iter, const OneStepGenerator& current, double loss)>;

// Gradient ascent on the train loss restricted to the forget noise set.
OneStepGenerator ga_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                            const DenseMatrix& forget_noise, const BaselineConfig& config,
                            const BaselineEvalHook& hook = nullptr);

// Fine-tunes on the full task in stat_segments segments and computes the
// parameter statistics across the resulting snapshots (pretrained weights
// included, so snapshot_count = stat_segments + 1).
ParamStatistics compute_param_statistics(const OneStepGenerator& g_pre, const VelocityField& teacher,
                                         const BaselineConfig& config);

// VDU loss gradient for given train-loss gradients:
//   grad of [ -(1-gamma) L_train + gamma * sum (theta - mu*)^2 / (2 sigma*^2) ].
ParamStore vdu_gradient(const OneStepGenerator& gen, const ParamStatistics& stats,
                        const ParamStore& train_grads, double gamma);

// -(1-gamma) L_train(forget) + gamma * sum (theta - mu*)^2 / (2 sigma*^2).
OneStepGenerator vdu_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                             const ParamStatistics& stats, const DenseMatrix& forget_noise,
                             const BaselineConfig& config, const BaselineEvalHook& hook = nullptr);

// Diagonal FIM at the pretrained weights over the pseudo data.
ParamStore compute_fim(const OneStepGenerator& g_pre, const VelocityField& teacher,
                       const DenseMatrix& noise_set, const BaselineConfig& config);

// alpha * noise-mapping loss on the forget set + beta * train loss on the
// pseudo-retain noise + (lambda_sa / 2) EWC with the diagonal FIM.
OneStepGenerator sa_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                            const PseudoSets& pseudo, const ParamStore& fim, const BaselineConfig& config,
                            const BaselineEvalHook& hook = nullptr);

SaliencyMask build_saliency_mask(const OneStepGenerator& g_pre, const VelocityField& teacher,
                                 const DenseMatrix& forget_noise, const BaselineConfig& config);

// SA base objective without EWC, updates masked to the salient parameters;
// frozen parameters finish bit-identical to the pretrained weights.
OneStepGenerator salun_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                               const PseudoSets& pseudo, const BaselineConfig& config,
                               const BaselineEvalHook& hook = nullptr, SaliencyMask* mask_out = nullptr);

}  // namespace uotlab

#endif  // UOTLAB_BASELINES_HPP_
