// SPDX-License-Identifier: Apache-2.0
#include "uotlab/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "uotlab/adam.hpp"
#include "uotlab/rng.hpp"

namespace uotlab {

const char* baseline_method_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::GA: return "ga";
    case BaselineMethod::VDU: return "vdu";
    case BaselineMethod::SA: return "sa";
    case BaselineMethod::SalUn: return "salun";
  }
  return "ga";
}

BaselineMethod baseline_method_from_name(const std::string& name) {
  if (name == "ga") return BaselineMethod::GA;
  if (name == "vdu") return BaselineMethod::VDU;
  if (name == "sa") return BaselineMethod::SA;
  if (name == "salun") return BaselineMethod::SalUn;
  throw ConfigError(strf("unknown baseline method '%s'", name.c_str()));
}

void BaselineConfig::validate() const {
  if (iterations < 0) throw ConfigError("BaselineConfig: negative iteration count");
  if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError(strf("BaselineConfig: gamma %g outside (0, 1)", gamma));
  if (sparsity <= 0.0 || sparsity >= 1.0) {
    throw ConfigError(strf("BaselineConfig: sparsity %g outside (0, 1)", sparsity));
  }
  if (alpha < 0.0 || beta < 0.0 || lambda_sa <= 0.0) {
    throw ConfigError("BaselineConfig: alpha/beta must be non-negative and lambda_sa positive");
  }
  if (batch < 1 || pseudo_set_size < 1) throw ConfigError("BaselineConfig: batch sizes must be >= 1");
  if (stat_segments < 1) throw ConfigError("BaselineConfig: stat_segments must be >= 1");
  if (eval_every < 1) throw ConfigError("BaselineConfig: eval_every must be >= 1");
}

namespace {

DenseMatrix gather_rows(const DenseMatrix& source, const std::vector<int>& rows) {
  DenseMatrix out(static_cast<int>(rows.size()), source.cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto src = source.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(r)).begin());
  }
  return out;
}

// mean over the batch of |G(x0) - target|^2, with gradients
struct RegressionPass {
  double loss = 0.0;
  ParamStore grads;
};

RegressionPass regression_pass(const OneStepGenerator& gen, const DenseMatrix& noise,
                               const DenseMatrix& target, double weight) {
  RegressionPass pass;
  ForwardTrace trace = mlp_forward_trace(gen.spec, gen.params, noise);
  DenseMatrix upstream(noise.rows, noise.cols);
  for (size_t k = 0; k < upstream.data.size(); ++k) {
    const double diff = trace.output().data[k] - target.data[k];
    pass.loss += diff * diff;
    upstream.data[k] = weight * 2.0 * diff / noise.rows;
  }
  pass.loss = weight * pass.loss / noise.rows;
  pass.grads = mlp_backward(gen.spec, gen.params, trace, upstream).params;
  return pass;
}

}  // namespace

double per_sample_train_loss(const OneStepGenerator& gen, const VelocityField& teacher,
                             std::span<const double> x0, int teacher_steps, OdeScheme scheme) {
  gen.validate();
  DenseMatrix row(1, static_cast<int>(x0.size()));
  std::copy(x0.begin(), x0.end(), row.data.begin());
  DenseMatrix target = integrate_ode(teacher, row, teacher_steps, scheme);
  DenseMatrix out = mlp_forward(gen.spec, gen.params, row);
  double acc = 0.0;
  for (size_t k = 0; k < out.data.size(); ++k) {
    const double d = out.data[k] - target.data[k];
    acc += d * d;
  }
  return acc;
}

PseudoSets build_pseudo_sets(const OneStepGenerator& g_pre, const FeatureExtractor& extractor,
                             const ForgetAnchor& anchor, const CostConfig& cfg, int n, uint64_t seed) {
  if (n < 1) throw ConfigError("build_pseudo_sets: n must be >= 1");
  DenseMatrix noise = sample_prior(g_pre.data_dim, n, derive_seed(seed, "pseudo.noise"));
  DenseMatrix outputs = generate_from(g_pre, noise);
  DenseMatrix feats = extractor.features(outputs);

  std::vector<int> forget_rows, retain_rows;
  for (int r = 0; r < n; ++r) {
    const double dist = feature_distance(cfg.distance, feats.row(r), anchor.mu_f);
    if (dist < cfg.margin) {
      forget_rows.push_back(r);
    } else {
      retain_rows.push_back(r);
    }
  }
  if (forget_rows.empty()) {
    throw Error(strf("build_pseudo_sets: no forget-region noise among %d samples; increase n or the margin", n));
  }
  PseudoSets sets;
  sets.seed = seed;
  sets.forget_noise = gather_rows(noise, forget_rows);
  sets.retain_noise = gather_rows(noise, retain_rows);
  sets.retain_samples = gather_rows(outputs, retain_rows);
  return sets;
}

namespace {

DenseMatrix teacher_targets(const VelocityField& teacher, const DenseMatrix& noise, int steps,
                            OdeScheme scheme) {
  return integrate_ode(teacher, noise, steps, scheme);
}

}  // namespace

OneStepGenerator ga_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                            const DenseMatrix& forget_noise, const BaselineConfig& config,
                            const BaselineEvalHook& hook) {
  config.validate();
  OneStepGenerator gen = g_pre;
  if (config.iterations == 0) return gen;
  if (forget_noise.rows < 1) throw ConfigError("ga_unlearn: empty forget noise set");

  DenseMatrix targets = teacher_targets(teacher, forget_noise, config.teacher_steps, config.scheme);
  Rng rng(derive_seed(config.seed, "ga.loop"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(gen.spec, adam_cfg);

  const int batch = std::min(config.batch, forget_noise.rows);
  std::vector<int> rows(static_cast<size_t>(batch));
  for (int iter = 1; iter <= config.iterations; ++iter) {
    for (int& r : rows) r = rng.index(forget_noise.rows);
    RegressionPass pass = regression_pass(gen, gather_rows(forget_noise, rows), gather_rows(targets, rows), 1.0);
    // ascend the training loss
    ParamStore grads = ParamStore::zeros(gen.spec);
    grads.add_scaled(pass.grads, -1.0);
    adam_step(gen.params, grads, adam);
    if (hook && (iter % config.eval_every == 0 || iter == config.iterations)) hook(iter, gen, pass.loss);
  }
  return gen;
}

ParamStatistics compute_param_statistics(const OneStepGenerator& g_pre, const VelocityField& teacher,
                                         const BaselineConfig& config) {
  config.validate();
  std::vector<ParamStore> snapshots;
  snapshots.push_back(g_pre.params);

  OneStepGenerator gen = g_pre;
  Rng rng(derive_seed(config.seed, "vdu.stats"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.stat_lr;
  AdamState adam = AdamState::create(gen.spec, adam_cfg);
  for (int segment = 0; segment < config.stat_segments; ++segment) {
    for (int step = 0; step < config.stat_steps_per_segment; ++step) {
      DenseMatrix noise = sample_prior(gen.data_dim, config.stat_batch, rng.next_u64());
      DenseMatrix targets = teacher_targets(teacher, noise, config.teacher_steps, config.scheme);
      RegressionPass pass = regression_pass(gen, noise, targets, 1.0);
      adam_step(gen.params, pass.grads, adam);
    }
    snapshots.push_back(gen.params);
  }

  ParamStatistics stats;
  stats.snapshot_count = static_cast<int>(snapshots.size());
  stats.mean = ParamStore::zeros(gen.spec);
  stats.stddev = ParamStore::zeros(gen.spec);
  const double inv = 1.0 / stats.snapshot_count;
  for (const auto& snap : snapshots) stats.mean.add_scaled(snap, inv);
  for (size_t l = 0; l < stats.mean.weights.size(); ++l) {
    auto accumulate = [&](const DenseMatrix& mean_m, DenseMatrix& std_m, auto member) {
      for (size_t i = 0; i < mean_m.data.size(); ++i) {
        double var = 0.0;
        for (const auto& snap : snapshots) {
          const double d = (snap.*member)[l].data[i] - mean_m.data[i];
          var += d * d;
        }
        std_m.data[i] = std::sqrt(var * inv) + ParamStatistics::kSigmaFloor;
      }
    };
    accumulate(stats.mean.weights[l], stats.stddev.weights[l], &ParamStore::weights);
    accumulate(stats.mean.biases[l], stats.stddev.biases[l], &ParamStore::biases);
  }
  return stats;
}

ParamStore vdu_gradient(const OneStepGenerator& gen, const ParamStatistics& stats,
                        const ParamStore& train_grads, double gamma) {
  ParamStore grads = ParamStore::zeros(gen.spec);
  grads.add_scaled(train_grads, -(1.0 - gamma));
  for (size_t l = 0; l < grads.weights.size(); ++l) {
    for (size_t i = 0; i < grads.weights[l].data.size(); ++i) {
      const double sd = stats.stddev.weights[l].data[i];
      grads.weights[l].data[i] +=
          gamma * (gen.params.weights[l].data[i] - stats.mean.weights[l].data[i]) / (sd * sd);
    }
    for (size_t i = 0; i < grads.biases[l].data.size(); ++i) {
      const double sd = stats.stddev.biases[l].data[i];
      grads.biases[l].data[i] +=
          gamma * (gen.params.biases[l].data[i] - stats.mean.biases[l].data[i]) / (sd * sd);
    }
  }
  return grads;
}

OneStepGenerator vdu_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                             const ParamStatistics& stats, const DenseMatrix& forget_noise,
                             const BaselineConfig& config, const BaselineEvalHook& hook) {
  config.validate();
  if (!stats.mean.same_shape(g_pre.params)) throw ShapeError("vdu_unlearn: statistics shape mismatch");
  OneStepGenerator gen = g_pre;
  if (config.iterations == 0) return gen;
  if (forget_noise.rows < 1) throw ConfigError("vdu_unlearn: empty forget noise set");

  DenseMatrix targets = teacher_targets(teacher, forget_noise, config.teacher_steps, config.scheme);
  Rng rng(derive_seed(config.seed, "vdu.loop"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(gen.spec, adam_cfg);

  const int batch = std::min(config.batch, forget_noise.rows);
  std::vector<int> rows(static_cast<size_t>(batch));
  for (int iter = 1; iter <= config.iterations; ++iter) {
    for (int& r : rows) r = rng.index(forget_noise.rows);
    RegressionPass pass = regression_pass(gen, gather_rows(forget_noise, rows), gather_rows(targets, rows), 1.0);
    ParamStore grads = vdu_gradient(gen, stats, pass.grads, config.gamma);
    adam_step(gen.params, grads, adam);
    if (hook && (iter % config.eval_every == 0 || iter == config.iterations)) {
      const double vdu_loss = -(1.0 - config.gamma) * pass.loss;
      hook(iter, gen, vdu_loss);
    }
  }
  return gen;
}

ParamStore compute_fim(const OneStepGenerator& g_pre, const VelocityField& teacher,
                       const DenseMatrix& noise_set, const BaselineConfig& config) {
  if (noise_set.rows < 1) throw ConfigError("compute_fim: empty noise set");
  ParamStore fim = ParamStore::zeros(g_pre.spec);
  const int count = std::min(noise_set.rows, config.fim_samples);
  DenseMatrix row(1, noise_set.cols);
  for (int r = 0; r < count; ++r) {
    std::copy(noise_set.row(r).begin(), noise_set.row(r).end(), row.data.begin());
    DenseMatrix target = teacher_targets(teacher, row, config.teacher_steps, config.scheme);
    ForwardTrace trace = mlp_forward_trace(g_pre.spec, g_pre.params, row);
    DenseMatrix upstream(1, noise_set.cols);
    for (size_t k = 0; k < upstream.data.size(); ++k) {
      upstream.data[k] = 2.0 * (trace.output().data[k] - target.data[k]);
    }
    ParamStore grads = mlp_backward(g_pre.spec, g_pre.params, trace, upstream).params;
    for (size_t l = 0; l < fim.weights.size(); ++l) {
      for (size_t i = 0; i < fim.weights[l].data.size(); ++i) {
        const double g = grads.weights[l].data[i];
        fim.weights[l].data[i] += g * g / count;
      }
      for (size_t i = 0; i < fim.biases[l].data.size(); ++i) {
        const double g = grads.biases[l].data[i];
        fim.biases[l].data[i] += g * g / count;
      }
    }
  }
  return fim;
}

namespace {

// shared by SA and SalUn; SalUn supplies a mask and drops the EWC term
OneStepGenerator base_objective_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                                        const PseudoSets& pseudo, const ParamStore* fim,
                                        const SaliencyMask* mask, const BaselineConfig& config,
                                        const BaselineEvalHook& hook, const char* purpose) {
  OneStepGenerator gen = g_pre;
  if (config.iterations == 0) return gen;
  if (pseudo.forget_noise.rows < 1 || pseudo.retain_noise.rows < 1) {
    throw ConfigError("base_objective_unlearn: empty pseudo sets");
  }
  DenseMatrix retain_targets =
      teacher_targets(teacher, pseudo.retain_noise, config.teacher_steps, config.scheme);
  Rng rng(derive_seed(config.seed, purpose));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(gen.spec, adam_cfg);

  const int forget_batch = std::min(config.batch, pseudo.forget_noise.rows);
  const int retain_batch = std::min(config.batch, pseudo.retain_noise.rows);
  std::vector<int> frows(static_cast<size_t>(forget_batch));
  std::vector<int> rrows(static_cast<size_t>(retain_batch));

  for (int iter = 1; iter <= config.iterations; ++iter) {
    for (int& r : frows) r = rng.index(pseudo.forget_noise.rows);
    for (int& r : rrows) r = rng.index(pseudo.retain_noise.rows);

    // noise-mapping loss with a fresh Gaussian target per step
    DenseMatrix fnoise = gather_rows(pseudo.forget_noise, frows);
    DenseMatrix epsilon(forget_batch, gen.data_dim);
    for (double& v : epsilon.data) v = rng.normal();
    RegressionPass forget_pass = regression_pass(gen, fnoise, epsilon, config.alpha);

    RegressionPass retain_pass =
        regression_pass(gen, gather_rows(pseudo.retain_noise, rrows), gather_rows(retain_targets, rrows),
                        config.beta);

    ParamStore grads = forget_pass.grads;
    grads.add_scaled(retain_pass.grads, 1.0);
    double loss = forget_pass.loss + retain_pass.loss;

    if (fim != nullptr) {
      for (size_t l = 0; l < grads.weights.size(); ++l) {
        for (size_t i = 0; i < grads.weights[l].data.size(); ++i) {
          const double diff = gen.params.weights[l].data[i] - g_pre.params.weights[l].data[i];
          grads.weights[l].data[i] += config.lambda_sa * fim->weights[l].data[i] * diff;
          loss += 0.5 * config.lambda_sa * fim->weights[l].data[i] * diff * diff;
        }
        for (size_t i = 0; i < grads.biases[l].data.size(); ++i) {
          const double diff = gen.params.biases[l].data[i] - g_pre.params.biases[l].data[i];
          grads.biases[l].data[i] += config.lambda_sa * fim->biases[l].data[i] * diff;
          loss += 0.5 * config.lambda_sa * fim->biases[l].data[i] * diff * diff;
        }
      }
    }
    if (mask != nullptr) {
      for (size_t l = 0; l < grads.weights.size(); ++l) {
        for (size_t i = 0; i < grads.weights[l].data.size(); ++i) {
          if (!mask->weights[l][i]) grads.weights[l].data[i] = 0.0;
        }
        for (size_t i = 0; i < grads.biases[l].data.size(); ++i) {
          if (!mask->biases[l][i]) grads.biases[l].data[i] = 0.0;
        }
      }
    }
    adam_step(gen.params, grads, adam);
    if (hook && (iter % config.eval_every == 0 || iter == config.iterations)) hook(iter, gen, loss);
  }
  return gen;
}

}  // namespace

OneStepGenerator sa_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                            const PseudoSets& pseudo, const ParamStore& fim, const BaselineConfig& config,
                            const BaselineEvalHook& hook) {
  config.validate();
  if (!fim.same_shape(g_pre.params)) throw ShapeError("sa_unlearn: FIM shape mismatch");
  return base_objective_unlearn(g_pre, teacher, pseudo, &fim, nullptr, config, hook, "sa.loop");
}

SaliencyMask build_saliency_mask(const OneStepGenerator& g_pre, const VelocityField& teacher,
                                 const DenseMatrix& forget_noise, const BaselineConfig& config) {
  if (forget_noise.rows < 1) throw ConfigError("build_saliency_mask: empty forget noise set");
  DenseMatrix targets = teacher_targets(teacher, forget_noise, config.teacher_steps, config.scheme);
  // gradient of the mean forget train loss at the pretrained weights
  RegressionPass pass = regression_pass(g_pre, forget_noise, targets, 1.0);

  std::vector<double> magnitudes;
  for (const auto& w : pass.grads.weights)
    for (double g : w.data) magnitudes.push_back(std::fabs(g));
  for (const auto& b : pass.grads.biases)
    for (double g : b.data) magnitudes.push_back(std::fabs(g));

  const size_t total = magnitudes.size();
  size_t keep = static_cast<size_t>(std::llround((1.0 - config.sparsity) * static_cast<double>(total)));
  keep = std::max<size_t>(1, std::min(keep, total));
  std::vector<double> sorted = magnitudes;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(keep - 1), sorted.end(),
                   std::greater<double>());
  const double threshold = sorted[keep - 1];

  SaliencyMask mask;
  size_t selected = 0;
  auto mark = [&](const std::vector<DenseMatrix>& grads, std::vector<std::vector<uint8_t>>& out) {
    for (const auto& g : grads) {
      std::vector<uint8_t> layer(g.data.size(), 0);
      for (size_t i = 0; i < g.data.size(); ++i) {
        if (std::fabs(g.data[i]) >= threshold && selected < keep) {
          layer[i] = 1;
          selected++;
        }
      }
      out.push_back(std::move(layer));
    }
  };
  mark(pass.grads.weights, mask.weights);
  mark(pass.grads.biases, mask.biases);
  mask.selected_count = selected;
  mask.selected_fraction = static_cast<double>(selected) / static_cast<double>(total);
  return mask;
}

OneStepGenerator salun_unlearn(const OneStepGenerator& g_pre, const VelocityField& teacher,
                               const PseudoSets& pseudo, const BaselineConfig& config,
                               const BaselineEvalHook& hook, SaliencyMask* mask_out) {
  config.validate();
  SaliencyMask mask = build_saliency_mask(g_pre, teacher, pseudo.forget_noise, config);
  if (mask_out != nullptr) *mask_out = mask;
  return base_objective_unlearn(g_pre, teacher, pseudo, nullptr, &mask, config, hook, "salun.loop");
}

}  // namespace uotlab
