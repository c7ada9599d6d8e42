// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_CONFIG_HPP_
#define UOTLAB_CONFIG_HPP_

#include <optional>
#include <string>
#include <vector>

#include "uotlab/baselines.hpp"
#include "uotlab/features.hpp"
#include "uotlab/gmm.hpp"
#include "uotlab/metrics.hpp"
#include "uotlab/unlearn.hpp"

namespace uotlab {

struct PretrainConfig {
  int cfm_iterations = 20000;
  double cfm_lr = 1e-3;
  double cfm_lr_final = 2e-5;
  int distill_iterations = 10000;
  double distill_lr = 1e-3;
  double distill_lr_final = 2e-5;
  int batch = 256;
  int teacher_steps = 50;
  int teacher_pool = 131072;
  int holdout = 4096;
  std::vector<int> velocity_hidden = {64, 64};
  std::vector<int> generator_hidden = {128, 128, 128};
};

struct FeatureConfig {
  FeatureKind kind = FeatureKind::ClassifierPenultimate;
  int hidden_width = 32;
  int hidden_layers = 2;
  int train_samples = 12288;
  int holdout_samples = 3072;
  int iterations = 3000;
  int batch = 128;
  double lr = 1e-3;
  double accuracy_floor = 0.98;
  int anchor_samples = 512;          // real forget draws for the anchor
  int margin_holdout_samples = 512;  // held-out forget draws for calibration
};

// Full experiment description. All sub-seeds derive from master_seed, so a
// (config bytes, master seed) pair pins every stream in the run.
struct RunConfig {
  std::string experiment;
  uint64_t master_seed = 2026;
  GmmSpec data = GmmSpec::default_three_modes();
  int forget_mode = 0;
  PretrainConfig pretrain;
  FeatureConfig features;
  UnlearnConfig unlearn;
  bool margin_auto = true;    // calibrate the margin per run
  double margin_scale = 1.0;  // multiplier on the calibrated margin
  BaselineConfig baseline;
  EvalConfig eval;
  std::string output_dir = "runs";

  void validate() const;
  std::string pretrain_dir() const;
  std::string unlearn_dir() const;
  std::string baseline_dir(BaselineMethod method) const;
};

// Strict parse: unknown keys are rejected with their location, defaults are
// filled, and per-module seeds are derived from master_seed.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Canonical resolved dump; re-parsing it reproduces the RunConfig.
std::string dump_resolved_config(const RunConfig& config);

// Sweep support: sets the dotted numeric path (e.g. "unlearn.lambda",
// "unlearn.margin_scale") in the resolved dump and re-parses. The path must
// resolve to an existing numeric key.
RunConfig apply_override(const RunConfig& base, const std::string& dotted_path, double value);

struct PreparedUnlearn {
  FeatureExtractor extractor;
  ForgetAnchor anchor;
  double margin = 0.0;           // after calibration and scaling
  long anchor_data_accesses = 0; // real draws consumed to build the anchor
};

// Trains the feature classifier on generated samples, computes the anchor
// from real forget draws (the one-time data access) and calibrates the
// margin when margin_auto is set.
PreparedUnlearn prepare_unlearn_inputs(const RunConfig& config, const OneStepGenerator& g_pre,
                                       DataSource& source);

struct PretrainArtifacts {
  VelocityField velocity;
  OneStepGenerator generator;
};

PretrainArtifacts load_pretrain_artifacts(const RunConfig& config);

int cmd_pretrain(const RunConfig& config);
int cmd_unlearn(const RunConfig& config);
int cmd_baseline(const RunConfig& config, BaselineMethod method);
int cmd_eval(const RunConfig& config, const std::string& checkpoint_path,
             const std::string& pre_checkpoint_path = "");
int cmd_oracle_check(const RunConfig& config);
int cmd_sweep(const RunConfig& config, const std::string& dotted_path, const std::vector<double>& values);
int cmd_plot(const RunConfig& config, const std::string& checkpoint_path, const std::string& out_path,
             int n_samples);

}  // namespace uotlab

#endif  // UOTLAB_CONFIG_HPP_
