// SPDX-License-Identifier: Apache-2.0
#include "uotlab/flowmap.hpp"

#include <cmath>

#include "uotlab/gmm.hpp"

namespace uotlab {

namespace {

// cosine decay from lr to lr_final across the run
double scheduled_lr(double lr, double lr_final, int iter, int total) {
  if (total <= 1) return lr;
  const double t = static_cast<double>(iter) / (total - 1);
  return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(t * 3.14159265358979323846));
}

}  // namespace

void VelocityField::validate() const {
  spec.validate();
  if (spec.input_width() != data_dim + 1 || spec.output_width() != data_dim) {
    throw ShapeError(strf("VelocityField: spec %d -> %d incompatible with data dimension %d",
                          spec.input_width(), spec.output_width(), data_dim));
  }
}

void OneStepGenerator::validate() const {
  spec.validate();
  if (spec.input_width() != data_dim || spec.output_width() != data_dim) {
    throw ShapeError(strf("OneStepGenerator: spec %d -> %d incompatible with data dimension %d",
                          spec.input_width(), spec.output_width(), data_dim));
  }
  if (ema_params.has_value() && !ema_params->same_shape(params)) {
    throw ShapeError("OneStepGenerator: EMA parameters do not match the live parameters");
  }
}

BatchSampler normal_prior_sampler(int dim) {
  return [dim](int n, Rng& rng) {
    DenseMatrix out(n, dim);
    for (double& v : out.data) v = rng.normal();
    return out;
  };
}

namespace {

std::vector<int> widths_with_hidden(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> widths;
  widths.push_back(in);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  return widths;
}

DenseMatrix with_time_column(const DenseMatrix& x, double t) {
  DenseMatrix out(x.rows, x.cols + 1);
  for (int r = 0; r < x.rows; ++r) {
    for (int c = 0; c < x.cols; ++c) out.at(r, c) = x.at(r, c);
    out.at(r, x.cols) = t;
  }
  return out;
}

DenseMatrix field_eval(const VelocityField& field, const DenseMatrix& x, double t) {
  return mlp_forward(field.spec, field.params, with_time_column(x, t));
}

}  // namespace

CfmResult cfm_train_velocity(const BatchSampler& data, const BatchSampler& prior, int data_dim,
                             const CfmConfig& config) {
  if (config.batch < 1) throw ConfigError("cfm_train_velocity: batch must be >= 1");
  if (config.iterations < 0) throw ConfigError("cfm_train_velocity: negative iteration count");

  CfmResult result;
  result.field.data_dim = data_dim;
  result.field.spec = MlpSpec::make(widths_with_hidden(data_dim + 1, config.hidden_widths, data_dim),
                                    config.hidden_activation);
  result.field.params = ParamStore::kaiming_uniform(result.field.spec, derive_seed(config.seed, "cfm.init"));

  Rng rng(derive_seed(config.seed, "cfm.loop"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(result.field.spec, adam_cfg);

  double window_sum = 0.0;
  int window_count = 0;
  for (int iter = 0; iter < config.iterations; ++iter) {
    adam.config.lr = scheduled_lr(config.lr, config.lr_final, iter, config.iterations);
    DenseMatrix x0 = prior(config.batch, rng);
    DenseMatrix x1 = data(config.batch, rng);
    if (x0.cols != data_dim || x1.cols != data_dim) {
      throw ShapeError(strf("cfm_train_velocity: samplers produced %d/%d cols, expected %d", x0.cols,
                            x1.cols, data_dim));
    }
    DenseMatrix input(config.batch, data_dim + 1);
    DenseMatrix target(config.batch, data_dim);
    for (int r = 0; r < config.batch; ++r) {
      const double t = rng.uniform();
      for (int c = 0; c < data_dim; ++c) {
        input.at(r, c) = (1.0 - t) * x0.at(r, c) + t * x1.at(r, c);
        target.at(r, c) = x1.at(r, c) - x0.at(r, c);
      }
      input.at(r, data_dim) = t;
    }

    ForwardTrace trace = mlp_forward_trace(result.field.spec, result.field.params, input);
    double loss = 0.0;
    DenseMatrix upstream(config.batch, data_dim);
    for (size_t k = 0; k < upstream.data.size(); ++k) {
      const double diff = trace.output().data[k] - target.data[k];
      loss += diff * diff;
      upstream.data[k] = 2.0 * diff / config.batch;
    }
    loss /= config.batch;
    if (!std::isfinite(loss)) {
      throw NonFiniteError(strf("cfm_train_velocity: non-finite loss at iteration %d", iter));
    }
    MlpGradients grads = mlp_backward(result.field.spec, result.field.params, trace, upstream);
    adam_step(result.field.params, grads.params, adam);

    window_sum += loss;
    window_count += 1;
    if ((iter + 1) % config.log_every == 0 || iter + 1 == config.iterations) {
      result.final_loss = window_sum / window_count;
      result.loss_log.emplace_back(iter + 1, result.final_loss);
      window_sum = 0.0;
      window_count = 0;
    }
  }
  return result;
}

DenseMatrix integrate_ode(const VelocityField& field, const DenseMatrix& x0, int n_steps,
                          OdeScheme scheme) {
  field.validate();
  if (n_steps < 1) throw ConfigError(strf("integrate_ode: n_steps = %d must be >= 1", n_steps));
  if (x0.cols != field.data_dim) {
    throw ShapeError(strf("integrate_ode: state has %d cols, field expects %d", x0.cols, field.data_dim));
  }
  const double dt = 1.0 / n_steps;
  DenseMatrix x = x0;
  for (int step = 0; step < n_steps; ++step) {
    const double t = step * dt;
    DenseMatrix k1 = field_eval(field, x, t);
    if (scheme == OdeScheme::Euler) {
      for (size_t k = 0; k < x.data.size(); ++k) x.data[k] += dt * k1.data[k];
    } else {
      DenseMatrix xe = x;
      for (size_t k = 0; k < xe.data.size(); ++k) xe.data[k] += dt * k1.data[k];
      DenseMatrix k2 = field_eval(field, xe, t + dt);
      for (size_t k = 0; k < x.data.size(); ++k) x.data[k] += 0.5 * dt * (k1.data[k] + k2.data[k]);
    }
    if (!x.all_finite()) {
      throw NonFiniteError(strf("integrate_ode: non-finite state after step %d", step));
    }
  }
  return x;
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

double mean_sq_residual(const OneStepGenerator& gen, const DenseMatrix& noise, const DenseMatrix& target) {
  DenseMatrix out = mlp_forward(gen.spec, gen.params, noise);
  double acc = 0.0;
  for (size_t k = 0; k < out.data.size(); ++k) {
    const double d = out.data[k] - target.data[k];
    acc += d * d;
  }
  return acc / out.rows;
}

}  // namespace

DistillResult distill_flowmap(const VelocityField& field, const BatchSampler& prior,
                              const DistillConfig& config) {
  field.validate();
  const int d = field.data_dim;

  DistillResult result;
  result.generator.data_dim = d;
  result.generator.spec =
      MlpSpec::make(widths_with_hidden(d, config.hidden_widths, d), config.hidden_activation);
  result.generator.params =
      ParamStore::kaiming_uniform(result.generator.spec, derive_seed(config.seed, "distill.init"));

  if (config.iterations == 0) return result;
  if (config.pool_size < config.batch) throw ConfigError("distill_flowmap: pool smaller than batch");

  // teacher-solved pairs; the ODE solve is the expensive part, so the
  // regression trains on a fixed pool with fresh pairs held out
  Rng pool_rng(derive_seed(config.seed, "distill.pool"));
  const int total = config.pool_size + config.holdout_size;
  DenseMatrix noise(total, d);
  DenseMatrix target(total, d);
  const int chunk = 8192;
  for (int start = 0; start < total; start += chunk) {
    const int count = std::min(chunk, total - start);
    DenseMatrix part = prior(count, pool_rng);
    if (part.cols != d) throw ShapeError("distill_flowmap: prior sampler dimension mismatch");
    DenseMatrix solved = integrate_ode(field, part, config.teacher_steps, config.scheme);
    for (int r = 0; r < count; ++r) {
      std::copy(part.row(r).begin(), part.row(r).end(), noise.row(start + r).begin());
      std::copy(solved.row(r).begin(), solved.row(r).end(), target.row(start + r).begin());
    }
  }

  Rng rng(derive_seed(config.seed, "distill.loop"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(result.generator.spec, adam_cfg);

  double window_sum = 0.0;
  int window_count = 0;
  std::vector<int> batch_rows(static_cast<size_t>(config.batch));
  for (int iter = 0; iter < config.iterations; ++iter) {
    adam.config.lr = scheduled_lr(config.lr, config.lr_final, iter, config.iterations);
    for (int& r : batch_rows) r = rng.index(config.pool_size);
    DenseMatrix x0 = gather_rows(noise, batch_rows);
    DenseMatrix y = gather_rows(target, batch_rows);

    ForwardTrace trace = mlp_forward_trace(result.generator.spec, result.generator.params, x0);
    double loss = 0.0;
    DenseMatrix upstream(config.batch, d);
    for (size_t k = 0; k < upstream.data.size(); ++k) {
      const double diff = trace.output().data[k] - y.data[k];
      loss += diff * diff;
      upstream.data[k] = 2.0 * diff / config.batch;
    }
    loss /= config.batch;
    if (!std::isfinite(loss)) {
      throw NonFiniteError(strf("distill_flowmap: non-finite loss at iteration %d", iter));
    }
    MlpGradients grads = mlp_backward(result.generator.spec, result.generator.params, trace, upstream);
    adam_step(result.generator.params, grads.params, adam);

    window_sum += loss;
    window_count += 1;
    if ((iter + 1) % config.log_every == 0 || iter + 1 == config.iterations) {
      result.loss_log.emplace_back(iter + 1, window_sum / window_count);
      window_sum = 0.0;
      window_count = 0;
    }
  }

  // residuals on a fixed training subset and on the held-out pairs
  const int train_probe = std::min(config.pool_size, 16384);
  std::vector<int> probe_rows(static_cast<size_t>(train_probe));
  for (int r = 0; r < train_probe; ++r) probe_rows[static_cast<size_t>(r)] = r;
  result.train_residual =
      mean_sq_residual(result.generator, gather_rows(noise, probe_rows), gather_rows(target, probe_rows));
  if (config.holdout_size > 0) {
    std::vector<int> holdout_rows(static_cast<size_t>(config.holdout_size));
    for (int r = 0; r < config.holdout_size; ++r) holdout_rows[static_cast<size_t>(r)] = config.pool_size + r;
    result.holdout_residual = mean_sq_residual(result.generator, gather_rows(noise, holdout_rows),
                                               gather_rows(target, holdout_rows));
  }
  return result;
}

DenseMatrix generate(const OneStepGenerator& gen, int n, uint64_t seed, bool use_ema) {
  gen.validate();
  return generate_from(gen, sample_prior(gen.data_dim, n, seed), use_ema);
}

DenseMatrix generate_from(const OneStepGenerator& gen, const DenseMatrix& noise, bool use_ema) {
  gen.validate();
  if (use_ema && !gen.ema_params.has_value()) {
    throw ConfigError("generate: EMA parameters requested but absent");
  }
  const ParamStore& params = use_ema ? *gen.ema_params : gen.params;
  return mlp_forward(gen.spec, params, noise);
}

}  // namespace uotlab
