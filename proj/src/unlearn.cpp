// SPDX-License-Identifier: Apache-2.0
#include "uotlab/unlearn.hpp"

#include <cmath>
#include <filesystem>

#include "uotlab/checkpoint.hpp"

namespace uotlab {

void UnlearnConfig::validate() const {
  cost.validate();
  psi1.validate();
  psi2.validate();
  if (batch_b1 < 1 || batch_b2 < 1 || batch_b3 < 1) throw ConfigError("UnlearnConfig: batch sizes must be >= 1");
  if (iterations < 0) throw ConfigError("UnlearnConfig: negative iteration count");
  if (eval_every < 1) throw ConfigError("UnlearnConfig: eval_every must be >= 1");
  if (ema_decay.has_value() && (*ema_decay <= 0.0 || *ema_decay >= 1.0)) {
    throw ConfigError(strf("UnlearnConfig: ema_decay %g outside (0, 1)", *ema_decay));
  }
  if (nonfinite_limit < 1) throw ConfigError("UnlearnConfig: nonfinite_limit must be >= 1");
}

UnlearnState UnlearnState::create(const OneStepGenerator& g_pre, FeatureExtractor extractor,
                                  ForgetAnchor anchor, const UnlearnConfig& config) {
  config.validate();
  g_pre.validate();
  if (extractor.input_dim != g_pre.data_dim) {
    throw ShapeError(strf("UnlearnState: extractor input dim %d, generator dim %d", extractor.input_dim,
                          g_pre.data_dim));
  }
  if (static_cast<int>(anchor.mu_f.size()) != extractor.feature_dim) {
    throw ShapeError(strf("UnlearnState: anchor has %zu entries, extractor feature dim %d",
                          anchor.mu_f.size(), extractor.feature_dim));
  }

  UnlearnState state;
  state.g_pre = g_pre;
  state.g_pre.ema_params.reset();
  state.g_theta = state.g_pre;  // byte-identical start
  if (config.ema_decay.has_value()) state.g_theta.ema_params = state.g_theta.params;
  state.extractor = std::move(extractor);
  state.anchor = std::move(anchor);
  state.config = config;

  std::vector<int> pot_widths;
  pot_widths.push_back(g_pre.data_dim);
  pot_widths.insert(pot_widths.end(), config.potential_hidden.begin(), config.potential_hidden.end());
  pot_widths.push_back(1);
  state.potential_spec = MlpSpec::make(pot_widths, Activation::LeakyReLU);
  state.potential_params =
      ParamStore::kaiming_uniform(state.potential_spec, derive_seed(config.seed, "unlearn.potential"));

  AdamConfig gen_cfg;
  gen_cfg.lr = config.generator_lr;
  state.gen_adam = AdamState::create(state.g_theta.spec, gen_cfg);
  AdamConfig pot_cfg;
  pot_cfg.lr = config.potential_lr;
  state.pot_adam = AdamState::create(state.potential_spec, pot_cfg);

  state.rng = Rng(derive_seed(config.seed, "unlearn.loop"));
  state.g_pre_hash = state.g_pre.params.content_hash();
  return state;
}

namespace {

void require_finite_loss(double value, const char* what, std::span<const double> v_values,
                         std::span<const double> costs) {
  if (std::isfinite(value)) return;
  double v_max = 0.0, c_max = 0.0;
  for (double v : v_values) v_max = std::max(v_max, std::fabs(v));
  for (double c : costs) c_max = std::max(c_max, std::fabs(c));
  throw NonFiniteError(strf("%s: non-finite value (max |v| %.3e, max |cost| %.3e over %zu samples)", what,
                            v_max, c_max, v_values.size()));
}

struct DualComputation {
  double value = 0.0;
  ParamStore grads;
  long region_hits = 0;
};

DualComputation compute_dual(const UnlearnState& state, const DenseMatrix& b1, const DenseMatrix& b2,
                             bool with_grads, ClampStats* stats, PerSampleDualLog* log) {
  const UnlearnConfig& cfg = state.config;
  DenseMatrix y_theta = generate_from(state.g_theta, b1);
  DenseMatrix y_pre_b1 = generate_from(state.g_pre, b1);
  CostBatch costs = unlearn_cost_batch(y_pre_b1, y_theta, state.extractor, state.anchor, cfg.cost);

  DualComputation result;
  result.region_hits = costs.region_hits;

  ForwardTrace trace1 = mlp_forward_trace(state.potential_spec, state.potential_params, y_theta);
  DenseMatrix y_pre_b2 = generate_from(state.g_pre, b2);
  ForwardTrace trace2 = mlp_forward_trace(state.potential_spec, state.potential_params, y_pre_b2);

  double term1 = 0.0;
  DenseMatrix upstream1(b1.rows, 1);
  for (int r = 0; r < b1.rows; ++r) {
    const double s = trace1.output().at(r, 0) - costs.cost[static_cast<size_t>(r)];
    term1 += psi_star(cfg.psi1, s, cfg.clamp_mult, stats);
    if (with_grads) upstream1.at(r, 0) = psi_star_derivative(cfg.psi1, s, cfg.clamp_mult) / b1.rows;
  }
  term1 /= b1.rows;

  double term2 = 0.0;
  DenseMatrix upstream2(b2.rows, 1);
  for (int r = 0; r < b2.rows; ++r) {
    const double v = trace2.output().at(r, 0);
    term2 += psi_star(cfg.psi2, -v, cfg.clamp_mult, stats);
    if (with_grads) upstream2.at(r, 0) = -psi_star_derivative(cfg.psi2, -v, cfg.clamp_mult) / b2.rows;
  }
  term2 /= b2.rows;

  result.value = term1 + term2;
  if (log != nullptr) {
    log->v_on_gtheta.assign(trace1.output().data.begin(), trace1.output().data.end());
    log->cost_b1 = costs.cost;
    log->v_on_gpre.assign(trace2.output().data.begin(), trace2.output().data.end());
  }
  require_finite_loss(result.value, "dual_loss", trace1.output().data, costs.cost);

  if (with_grads) {
    result.grads = mlp_backward(state.potential_spec, state.potential_params, trace1, upstream1).params;
    MlpGradients g2 = mlp_backward(state.potential_spec, state.potential_params, trace2, upstream2);
    result.grads.add_scaled(g2.params, 1.0);
  }
  return result;
}

struct GenComputation {
  double value = 0.0;
  ParamStore grads;
  long region_hits = 0;
};

GenComputation compute_generator(const UnlearnState& state, const DenseMatrix& b3, bool with_grads,
                                 PerSampleGenLog* log) {
  const UnlearnConfig& cfg = state.config;
  ForwardTrace gen_trace = mlp_forward_trace(state.g_theta.spec, state.g_theta.params, b3);
  const DenseMatrix& y_theta = gen_trace.output();
  DenseMatrix y_pre = generate_from(state.g_pre, b3);
  CostBatch costs = unlearn_cost_batch(y_pre, y_theta, state.extractor, state.anchor, cfg.cost);

  ForwardTrace pot_trace = mlp_forward_trace(state.potential_spec, state.potential_params, y_theta);

  GenComputation result;
  result.region_hits = costs.region_hits;
  double total = 0.0;
  for (int r = 0; r < b3.rows; ++r) {
    total += costs.cost[static_cast<size_t>(r)] - pot_trace.output().at(r, 0);
  }
  result.value = total / b3.rows;
  if (log != nullptr) {
    log->cost_b3 = costs.cost;
    log->v_on_gtheta.assign(pot_trace.output().data.begin(), pot_trace.output().data.end());
  }
  require_finite_loss(result.value, "generator_loss", pot_trace.output().data, costs.cost);

  if (!with_grads) return result;

  // d/dy of -v(y), potential frozen
  DenseMatrix pot_upstream(b3.rows, 1);
  for (int r = 0; r < b3.rows; ++r) pot_upstream.at(r, 0) = -1.0 / b3.rows;
  DenseMatrix dy =
      mlp_backward(state.potential_spec, state.potential_params, pot_trace, pot_upstream).input;

  // d/dy of the cost branch; membership is a stop-gradient boolean
  DenseMatrix feat_upstream(b3.rows, state.extractor.feature_dim);
  bool any_in_region = false;
  for (int r = 0; r < b3.rows; ++r) {
    if (costs.in_region[static_cast<size_t>(r)]) {
      any_in_region = true;
      const auto grad = anchor_distance_feature_grad(cfg.cost.distance, costs.features_cur.row(r),
                                                     state.anchor.mu_f);
      for (int c = 0; c < state.extractor.feature_dim; ++c) {
        feat_upstream.at(r, c) = -cfg.cost.lambda * grad[static_cast<size_t>(c)] / b3.rows;
      }
    } else {
      for (int c = 0; c < b3.cols; ++c) {
        dy.at(r, c) += 2.0 * cfg.cost.tau * (y_theta.at(r, c) - y_pre.at(r, c)) / b3.rows;
      }
    }
  }
  if (any_in_region) {
    DenseMatrix through_extractor = state.extractor.features_input_grad(y_theta, feat_upstream);
    for (size_t k = 0; k < dy.data.size(); ++k) dy.data[k] += through_extractor.data[k];
  }

  result.grads = mlp_backward(state.g_theta.spec, state.g_theta.params, gen_trace, dy).params;
  return result;
}

}  // namespace

double dual_loss(const UnlearnState& state, const DenseMatrix& b1, const DenseMatrix& b2,
                 PerSampleDualLog* log) {
  return compute_dual(state, b1, b2, false, nullptr, log).value;
}

double generator_loss(const UnlearnState& state, const DenseMatrix& b3, PerSampleGenLog* log) {
  return compute_generator(state, b3, false, log).value;
}

void unlearn_step(UnlearnState& state) {
  const UnlearnConfig& cfg = state.config;
  DenseMatrix b1 = sample_prior(state.g_theta.data_dim, cfg.batch_b1, state.rng.next_u64());
  DenseMatrix b2 = sample_prior(state.g_theta.data_dim, cfg.batch_b2, state.rng.next_u64());
  DenseMatrix b3 = sample_prior(state.g_theta.data_dim, cfg.batch_b3, state.rng.next_u64());

  try {
    DualComputation dual = compute_dual(state, b1, b2, true, &state.telemetry.clamp, nullptr);
    adam_step(state.potential_params, dual.grads, state.pot_adam);

    GenComputation gen = compute_generator(state, b3, true, nullptr);
    adam_step(state.g_theta.params, gen.grads, state.gen_adam);
    if (cfg.ema_decay.has_value()) {
      ema_update(*state.g_theta.ema_params, state.g_theta.params, *cfg.ema_decay);
    }

    state.telemetry.last_dual_loss = dual.value;
    state.telemetry.last_gen_loss = gen.value;
    state.telemetry.region_hits += dual.region_hits + gen.region_hits;
    state.telemetry.region_samples += cfg.batch_b1 + cfg.batch_b3;
    state.telemetry.nonfinite_streak = 0;
  } catch (const NonFiniteError& e) {
    state.telemetry.nonfinite_streak += 1;
    if (state.telemetry.nonfinite_streak >= cfg.nonfinite_limit) {
      throw Error(strf("unlearn_step: %d consecutive non-finite steps, aborting (%s)",
                       state.telemetry.nonfinite_streak, e.what()));
    }
  }
  state.iteration += 1;
}

UnlearnRunResult run_unlearn(const OneStepGenerator& g_pre, const FeatureExtractor& extractor,
                             const ForgetAnchor& anchor, const UnlearnConfig& config, const GmmSpec& spec,
                             int forget_index, const EvalConfig& eval_cfg, const std::string& out_dir) {
  UnlearnState state = UnlearnState::create(g_pre, extractor, anchor, config);
  const bool persist = !out_dir.empty();
  if (persist) std::filesystem::create_directories(out_dir);

  UnlearnRunResult result;

  // iteration-0 evaluation doubles as the pretrained baseline
  EvalReport pre_report = evaluate(state.g_pre, std::nullopt, spec, forget_index, eval_cfg);
  result.pretrain_forget_count = pre_report.forget_count;

  {
    // probe losses at initialization on a stream separate from the loop
    Rng probe(derive_seed(config.seed, "unlearn.init_probe"));
    DenseMatrix b1 = sample_prior(g_pre.data_dim, config.batch_b1, probe.next_u64());
    DenseMatrix b2 = sample_prior(g_pre.data_dim, config.batch_b2, probe.next_u64());
    DenseMatrix b3 = sample_prior(g_pre.data_dim, config.batch_b3, probe.next_u64());
    RunRecordRow row;
    row.iter = 0;
    row.dual_loss = dual_loss(state, b1, b2);
    row.gen_loss = generator_loss(state, b3);
    const CostBatch probe_costs =
        unlearn_cost_batch(generate_from(state.g_pre, b3), generate_from(state.g_theta, b3),
                           state.extractor, state.anchor, config.cost);
    row.region_hit_rate = static_cast<double>(probe_costs.region_hits) / config.batch_b3;
    row.clamp_count = state.telemetry.clamp.clamped;
    row.pul = 0.0;
    row.frechet_retain = pre_report.frechet_retain;
    row.oos_mass = pre_report.oos_mass;
    result.rows.push_back(row);
  }

  auto evaluate_now = [&](long iter) {
    if (state.g_pre.params.content_hash() != state.g_pre_hash) {
      throw Error("run_unlearn: pretrained generator parameters changed during the run");
    }
    const bool use_ema = config.ema_decay.has_value();
    OneStepGenerator snapshot = state.g_theta;
    if (use_ema) snapshot.params = *snapshot.ema_params;
    EvalReport report = evaluate(snapshot, result.pretrain_forget_count, spec, forget_index, eval_cfg);
    RunRecordRow row;
    row.iter = iter;
    row.dual_loss = state.telemetry.last_dual_loss;
    row.gen_loss = state.telemetry.last_gen_loss;
    row.region_hit_rate = state.telemetry.region_samples > 0
                              ? static_cast<double>(state.telemetry.region_hits) / state.telemetry.region_samples
                              : 0.0;
    state.telemetry.region_hits = 0;
    state.telemetry.region_samples = 0;
    row.clamp_count = state.telemetry.clamp.clamped;
    row.pul = report.pul_percent;
    row.frechet_retain = report.frechet_retain;
    row.oos_mass = report.oos_mass;
    result.rows.push_back(row);
    if (persist) {
      Checkpoint ckpt{snapshot.spec, snapshot.params, config.seed, iter};
      save_checkpoint((std::filesystem::path(out_dir) / strf("gtheta_iter%06ld.ckpt", iter)).string(), ckpt);
    }
    return report;
  };

  EvalReport last_report = pre_report;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    unlearn_step(state);
    if (iter % config.eval_every == 0 || iter == config.iterations) {
      last_report = evaluate_now(iter);
    }
  }
  if (config.iterations == 0) last_report = pre_report;

  result.final_report = last_report;
  result.generator = state.g_theta;
  if (persist) {
    Checkpoint final_ckpt{state.g_theta.spec,
                          config.ema_decay.has_value() ? *state.g_theta.ema_params : state.g_theta.params,
                          config.seed, state.iteration};
    save_checkpoint((std::filesystem::path(out_dir) / "gtheta_final.ckpt").string(), final_ckpt);
    write_run_record_csv((std::filesystem::path(out_dir) / "record.csv").string(), result.rows);
  }
  return result;
}

UotmResult uotm_pretrain(const BatchSampler& data, int data_dim, const UotmConfig& config) {
  if (config.batch < 1) throw ConfigError("uotm_pretrain: batch must be >= 1");
  config.psi1.validate();
  config.psi2.validate();

  UotmResult result;
  std::vector<int> gen_widths;
  gen_widths.push_back(data_dim);
  gen_widths.insert(gen_widths.end(), config.generator_hidden.begin(), config.generator_hidden.end());
  gen_widths.push_back(data_dim);
  result.generator.data_dim = data_dim;
  result.generator.spec = MlpSpec::make(gen_widths, Activation::LeakyReLU);
  result.generator.params =
      ParamStore::kaiming_uniform(result.generator.spec, derive_seed(config.seed, "uotm.generator"));

  std::vector<int> pot_widths;
  pot_widths.push_back(data_dim);
  pot_widths.insert(pot_widths.end(), config.potential_hidden.begin(), config.potential_hidden.end());
  pot_widths.push_back(1);
  MlpSpec pot_spec = MlpSpec::make(pot_widths, Activation::LeakyReLU);
  ParamStore pot_params = ParamStore::kaiming_uniform(pot_spec, derive_seed(config.seed, "uotm.potential"));

  AdamConfig gen_cfg;
  gen_cfg.lr = config.generator_lr;
  AdamState gen_adam = AdamState::create(result.generator.spec, gen_cfg);
  AdamConfig pot_cfg;
  pot_cfg.lr = config.potential_lr;
  AdamState pot_adam = AdamState::create(pot_spec, pot_cfg);

  Rng rng(derive_seed(config.seed, "uotm.loop"));
  ClampStats clamp;
  int streak = 0;

  auto quad_cost = [](std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - y[i];
      acc += d * d;
    }
    return 0.5 * acc;
  };

  double dual_window = 0.0, gen_window = 0.0;
  int window = 0;
  for (int iter = 0; iter < config.iterations; ++iter) {
    DenseMatrix b1 = sample_prior(data_dim, config.batch, rng.next_u64());
    DenseMatrix b2 = data(config.batch, rng);
    DenseMatrix b3 = sample_prior(data_dim, config.batch, rng.next_u64());
    try {
      // potential step
      DenseMatrix t1 = mlp_forward(result.generator.spec, result.generator.params, b1);
      ForwardTrace pt1 = mlp_forward_trace(pot_spec, pot_params, t1);
      ForwardTrace pt2 = mlp_forward_trace(pot_spec, pot_params, b2);
      double dual_value = 0.0;
      DenseMatrix up1(config.batch, 1), up2(config.batch, 1);
      for (int r = 0; r < config.batch; ++r) {
        const double c = quad_cost(b1.row(r), t1.row(r));
        const double s = pt1.output().at(r, 0) - c;
        dual_value += psi_star(config.psi1, s, config.clamp_mult, &clamp);
        up1.at(r, 0) = psi_star_derivative(config.psi1, s, config.clamp_mult) / config.batch;
        const double v = pt2.output().at(r, 0);
        dual_value += psi_star(config.psi2, -v, config.clamp_mult, &clamp);
        up2.at(r, 0) = -psi_star_derivative(config.psi2, -v, config.clamp_mult) / config.batch;
      }
      dual_value /= config.batch;
      if (!std::isfinite(dual_value)) throw NonFiniteError(strf("uotm_pretrain: non-finite dual at %d", iter));
      ParamStore pot_grads = mlp_backward(pot_spec, pot_params, pt1, up1).params;
      pot_grads.add_scaled(mlp_backward(pot_spec, pot_params, pt2, up2).params, 1.0);
      adam_step(pot_params, pot_grads, pot_adam);

      // generator step against the updated potential
      ForwardTrace gt = mlp_forward_trace(result.generator.spec, result.generator.params, b3);
      ForwardTrace pt3 = mlp_forward_trace(pot_spec, pot_params, gt.output());
      double gen_value = 0.0;
      DenseMatrix pot_up(config.batch, 1);
      for (int r = 0; r < config.batch; ++r) {
        gen_value += quad_cost(b3.row(r), gt.output().row(r)) - pt3.output().at(r, 0);
        pot_up.at(r, 0) = -1.0 / config.batch;
      }
      gen_value /= config.batch;
      if (!std::isfinite(gen_value)) throw NonFiniteError(strf("uotm_pretrain: non-finite gen at %d", iter));
      DenseMatrix dy = mlp_backward(pot_spec, pot_params, pt3, pot_up).input;
      for (int r = 0; r < config.batch; ++r) {
        for (int c = 0; c < data_dim; ++c) {
          dy.at(r, c) += (gt.output().at(r, c) - b3.at(r, c)) / config.batch;
        }
      }
      ParamStore gen_grads = mlp_backward(result.generator.spec, result.generator.params, gt, dy).params;
      adam_step(result.generator.params, gen_grads, gen_adam);

      dual_window += dual_value;
      gen_window += gen_value;
      window += 1;
      streak = 0;
    } catch (const NonFiniteError& e) {
      streak += 1;
      if (streak >= config.nonfinite_limit) {
        throw Error(strf("uotm_pretrain: %d consecutive non-finite steps (%s)", streak, e.what()));
      }
    }
    if (window > 0 && ((iter + 1) % config.log_every == 0 || iter + 1 == config.iterations)) {
      result.dual_log.emplace_back(iter + 1, dual_window / window);
      result.gen_log.emplace_back(iter + 1, gen_window / window);
      dual_window = gen_window = 0.0;
      window = 0;
    }
  }
  return result;
}

}  // namespace uotlab
