// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_UNLEARN_HPP_
#define UOTLAB_UNLEARN_HPP_

#include <optional>
#include <string>
#include <vector>

#include "uotlab/adam.hpp"
#include "uotlab/entropy.hpp"
#include "uotlab/features.hpp"
#include "uotlab/flowmap.hpp"
#include "uotlab/metrics.hpp"
#include "uotlab/run_record.hpp"

namespace uotlab {

struct UnlearnConfig {
  CostConfig cost;
  EntropyFn psi1{EntropyKind::KL, 1.0};
  EntropyFn psi2{EntropyKind::KL, 1.0};
  int batch_b1 = 256;
  int batch_b2 = 256;
  int batch_b3 = 256;
  double generator_lr = 1.6e-4;
  double potential_lr = 1.0e-4;
  int iterations = 5000;
  std::optional<double> ema_decay;  // disabled by default
  uint64_t seed = 3;
  int eval_every = 500;
  int nonfinite_limit = 5;  // consecutive bad steps before aborting
  double clamp_mult = 20.0;
  std::vector<int> potential_hidden = {128, 128};

  void validate() const;
};

struct UnlearnTelemetry {
  double last_dual_loss = 0.0;
  double last_gen_loss = 0.0;
  long region_hits = 0;     // over generated batches since the last eval
  long region_samples = 0;
  ClampStats clamp;
  int nonfinite_streak = 0;
};

// Alternating optimization state. g_pre is frozen for the lifetime of the
// run (hash-checked at every evaluation); g_theta starts byte-identical
// to it.
struct UnlearnState {
  OneStepGenerator g_pre;
  OneStepGenerator g_theta;
  MlpSpec potential_spec;
  ParamStore potential_params;
  FeatureExtractor extractor;
  ForgetAnchor anchor;
  UnlearnConfig config;
  AdamState gen_adam;
  AdamState pot_adam;
  long iteration = 0;
  Rng rng{0};
  UnlearnTelemetry telemetry;
  uint64_t g_pre_hash = 0;

  static UnlearnState create(const OneStepGenerator& g_pre, FeatureExtractor extractor,
                             ForgetAnchor anchor, const UnlearnConfig& config);
};

struct PerSampleDualLog {
  std::vector<double> v_on_gtheta;  // potential at G_theta(x0), x0 in B1
  std::vector<double> cost_b1;
  std::vector<double> v_on_gpre;  // potential at G_pre(x0), x0 in B2
};

struct PerSampleGenLog {
  std::vector<double> cost_b3;
  std::vector<double> v_on_gtheta;
};

// Potential objective of Algorithm 1:
//   mean_{B1} psi1*( v(G_theta(x0)) - c_ul(G_pre(x0), G_theta(x0)) )
// + mean_{B2} psi2*( -v(G_pre(x0)) ),
// with G_theta outputs treated as constants.
double dual_loss(const UnlearnState& state, const DenseMatrix& b1, const DenseMatrix& b2,
                 PerSampleDualLog* log = nullptr);

// Generator objective of Algorithm 1:
//   mean_{B3} [ c_ul(G_pre(x0), G_theta(x0)) - v(G_theta(x0)) ],
// with the potential treated as constant.
double generator_loss(const UnlearnState& state, const DenseMatrix& b3, PerSampleGenLog* log = nullptr);

// One alternating iteration: fresh independent noise batches, one Adam step
// on the potential, then one Adam step on the generator against the updated
// potential, optional EMA. Region membership is a per-sample stop-gradient
// boolean; inside the forget branch gradients flow through the anchor
// distance into the generator with the extractor frozen.
void unlearn_step(UnlearnState& state);

struct UnlearnRunResult {
  std::vector<RunRecordRow> rows;
  EvalReport final_report;
  OneStepGenerator generator;
  long pretrain_forget_count = 0;
};

// Full run: evaluates every eval_every iterations on the fixed eval seed,
// persists iteration-stamped checkpoints and the RunRecord CSV when out_dir
// is non-empty. The optimization consumes only prior noise, G_pre forward
// passes, the precomputed anchor and the frozen extractor; no data source
// enters this function.
UnlearnRunResult run_unlearn(const OneStepGenerator& g_pre, const FeatureExtractor& extractor,
                             const ForgetAnchor& anchor, const UnlearnConfig& config, const GmmSpec& spec,
                             int forget_index, const EvalConfig& eval_cfg, const std::string& out_dir = "");

struct UotmConfig {
  EntropyFn psi1{EntropyKind::KL, 1.0};
  EntropyFn psi2{EntropyKind::KL, 1.0};
  int batch = 256;
  double generator_lr = 1.6e-4;
  double potential_lr = 1.0e-4;
  int iterations = 5000;
  uint64_t seed = 4;
  int nonfinite_limit = 5;
  double clamp_mult = 20.0;
  std::vector<int> generator_hidden = {128, 128, 128};
  std::vector<int> potential_hidden = {128, 128};
  int log_every = 250;
};

struct UotmResult {
  OneStepGenerator generator;
  std::vector<std::pair<long, double>> dual_log;
  std::vector<std::pair<long, double>> gen_log;
};

// Semi-dual UOT map trainer with quadratic cost c(x, T(x)) = 0.5 |x - T(x)|^2
// from prior noise to the data distribution; the alternative pretraining
// route. Uses real data, so it takes a sampler.
UotmResult uotm_pretrain(const BatchSampler& data, int data_dim, const UotmConfig& config);

}  // namespace uotlab

#endif  // UOTLAB_UNLEARN_HPP_
