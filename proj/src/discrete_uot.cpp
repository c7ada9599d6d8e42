// SPDX-License-Identifier: Apache-2.0
#include "uotlab/discrete_uot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eigen_map.hpp"

namespace uotlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_masses(std::span<const double> masses, const char* name) {
  bool any_positive = false;
  for (double m : masses) {
    if (m < 0.0 || !std::isfinite(m)) throw ConfigError(strf("%s: mass %g invalid", name, m));
    any_positive = any_positive || m > 0.0;
  }
  if (masses.empty() || !any_positive) throw ConfigError(strf("%s: needs at least one positive mass", name));
}

void check_shapes(std::span<const double> mu, std::span<const double> nu, const DenseMatrix& cost) {
  if (cost.rows != static_cast<int>(mu.size()) || cost.cols != static_cast<int>(nu.size())) {
    throw ShapeError(strf("cost matrix is %d x %d, measures have %zu and %zu atoms", cost.rows, cost.cols,
                          mu.size(), nu.size()));
  }
}

double logsumexp(std::span<const double> terms) {
  double mx = kNegInf;
  for (double t : terms) mx = std::max(mx, t);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

}  // namespace

void DiscreteMeasure::validate() const {
  if (points.size() != masses.size()) {
    throw ShapeError(strf("DiscreteMeasure: %zu points but %zu masses", points.size(), masses.size()));
  }
  check_masses(masses, "DiscreteMeasure");
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].size() != points[0].size()) throw ShapeError("DiscreteMeasure: mixed point dimensions");
  }
}

TransportPlan TransportPlan::from_matrix(DenseMatrix pi) {
  for (double v : pi.data) {
    if (v < 0.0 || !std::isfinite(v)) throw ConfigError(strf("TransportPlan: entry %g invalid", v));
  }
  TransportPlan plan;
  plan.row_marginals.assign(static_cast<size_t>(pi.rows), 0.0);
  plan.col_marginals.assign(static_cast<size_t>(pi.cols), 0.0);
  for (int i = 0; i < pi.rows; ++i) {
    for (int j = 0; j < pi.cols; ++j) {
      plan.row_marginals[static_cast<size_t>(i)] += pi.at(i, j);
      plan.col_marginals[static_cast<size_t>(j)] += pi.at(i, j);
    }
  }
  plan.pi = std::move(pi);
  return plan;
}

DenseMatrix cost_matrix_sqeuclidean(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  mu.validate();
  nu.validate();
  DenseMatrix cost(static_cast<int>(mu.points.size()), static_cast<int>(nu.points.size()));
  for (size_t i = 0; i < mu.points.size(); ++i) {
    for (size_t j = 0; j < nu.points.size(); ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < mu.points[i].size(); ++k) {
        const double d = mu.points[i][k] - nu.points[j][k];
        d2 += d * d;
      }
      cost.at(static_cast<int>(i), static_cast<int>(j)) = d2;
    }
  }
  return cost;
}

namespace {

// mass * psi(marginal / mass) with the zero-mass convention
double marginal_penalty(const EntropyFn& fn, double marginal, double mass) {
  if (mass == 0.0) {
    if (marginal <= 0.0) return 0.0;
    return std::numeric_limits<double>::infinity();
  }
  return mass * psi(fn, marginal / mass);
}

}  // namespace

double uot_primal_value(const TransportPlan& plan, const DenseMatrix& cost, std::span<const double> mu,
                        std::span<const double> nu, const EntropyFn& psi1, const EntropyFn& psi2) {
  check_masses(mu, "uot_primal_value: mu");
  check_masses(nu, "uot_primal_value: nu");
  check_shapes(mu, nu, cost);
  if (!plan.pi.same_shape(cost)) {
    throw ShapeError(strf("uot_primal_value: plan is %d x %d, cost is %d x %d", plan.pi.rows, plan.pi.cols,
                          cost.rows, cost.cols));
  }
  double value = 0.0;
  for (size_t k = 0; k < plan.pi.data.size(); ++k) value += cost.data[k] * plan.pi.data[k];
  for (size_t i = 0; i < mu.size(); ++i) value += marginal_penalty(psi1, plan.row_marginals[i], mu[i]);
  for (size_t j = 0; j < nu.size(); ++j) value += marginal_penalty(psi2, plan.col_marginals[j], nu[j]);
  return value;
}

double entropic_primal_value(const TransportPlan& plan, const DenseMatrix& cost, std::span<const double> mu,
                             std::span<const double> nu, const EntropyFn& psi1, const EntropyFn& psi2,
                             double epsilon) {
  double value = uot_primal_value(plan, cost, mu, nu, psi1, psi2);
  for (double p : plan.pi.data) {
    if (p > 0.0) value += epsilon * (p * std::log(p) - p);
  }
  return value;
}

TransportPlan solve_uot_sinkhorn(std::span<const double> mu, std::span<const double> nu,
                                 const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2,
                                 const SinkhornOptions& options) {
  check_masses(mu, "solve_uot_sinkhorn: mu");
  check_masses(nu, "solve_uot_sinkhorn: nu");
  check_shapes(mu, nu, cost);
  if (psi1.kind != EntropyKind::KL || psi2.kind != EntropyKind::KL) {
    throw ConfigError("solve_uot_sinkhorn: scaling updates require KL marginal penalties");
  }
  if (options.epsilon <= 0.0) throw ConfigError(strf("solve_uot_sinkhorn: epsilon %g must be > 0", options.epsilon));

  const int n = cost.rows;
  const int m = cost.cols;
  const double eps = options.epsilon;
  const double alpha1 = psi1.scale / (psi1.scale + eps);
  const double alpha2 = psi2.scale / (psi2.scale + eps);

  std::vector<double> log_mu(static_cast<size_t>(n)), log_nu(static_cast<size_t>(m));
  for (int i = 0; i < n; ++i) log_mu[static_cast<size_t>(i)] = mu[static_cast<size_t>(i)] > 0.0 ? std::log(mu[static_cast<size_t>(i)]) : kNegInf;
  for (int j = 0; j < m; ++j) log_nu[static_cast<size_t>(j)] = nu[static_cast<size_t>(j)] > 0.0 ? std::log(nu[static_cast<size_t>(j)]) : kNegInf;

  std::vector<double> a(static_cast<size_t>(n), 0.0), b(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < n; ++i)
    if (log_mu[static_cast<size_t>(i)] == kNegInf) a[static_cast<size_t>(i)] = kNegInf;
  for (int j = 0; j < m; ++j)
    if (log_nu[static_cast<size_t>(j)] == kNegInf) b[static_cast<size_t>(j)] = kNegInf;

  auto plan_from = [&](const std::vector<double>& la, const std::vector<double>& lb) {
    DenseMatrix pi(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const double lp = la[static_cast<size_t>(i)] + lb[static_cast<size_t>(j)] - cost.at(i, j) / eps;
        pi.at(i, j) = lp == kNegInf ? 0.0 : std::exp(lp);
      }
    }
    return pi;
  };

  DenseMatrix prev_pi = plan_from(a, b);
  std::vector<double> row_terms(static_cast<size_t>(m)), col_terms(static_cast<size_t>(n));
  double residual = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < options.max_iters; ++iter) {
    double scaling_change = 0.0;
    for (int i = 0; i < n; ++i) {
      if (log_mu[static_cast<size_t>(i)] == kNegInf) continue;
      for (int j = 0; j < m; ++j) row_terms[static_cast<size_t>(j)] = b[static_cast<size_t>(j)] - cost.at(i, j) / eps;
      const double next = alpha1 * (log_mu[static_cast<size_t>(i)] - logsumexp(row_terms));
      scaling_change = std::max(scaling_change, std::fabs(next - a[static_cast<size_t>(i)]));
      a[static_cast<size_t>(i)] = next;
    }
    for (int j = 0; j < m; ++j) {
      if (log_nu[static_cast<size_t>(j)] == kNegInf) continue;
      for (int i = 0; i < n; ++i) col_terms[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] - cost.at(i, j) / eps;
      const double next = alpha2 * (log_nu[static_cast<size_t>(j)] - logsumexp(col_terms));
      scaling_change = std::max(scaling_change, std::fabs(next - b[static_cast<size_t>(j)]));
      b[static_cast<size_t>(j)] = next;
    }

    DenseMatrix pi = plan_from(a, b);
    double plan_change = 0.0;
    for (size_t k = 0; k < pi.data.size(); ++k) {
      plan_change = std::max(plan_change, std::fabs(pi.data[k] - prev_pi.data[k]));
    }
    prev_pi = std::move(pi);
    residual = std::min(scaling_change, plan_change);
    if (residual < options.tol) return TransportPlan::from_matrix(std::move(prev_pi));
  }
  throw Error(strf("solve_uot_sinkhorn: no convergence in %d iterations, residual %.3e", options.max_iters,
                   residual));
}

TransportPlan solve_uot_bruteforce(std::span<const double> mu, std::span<const double> nu,
                                   const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2,
                                   const BruteForceOptions& options) {
  check_masses(mu, "solve_uot_bruteforce: mu");
  check_masses(nu, "solve_uot_bruteforce: nu");
  check_shapes(mu, nu, cost);
  if (options.epsilon <= 0.0) throw ConfigError("solve_uot_bruteforce: epsilon must be > 0");
  const int n = cost.rows;
  const int m = cost.cols;
  if (n * m > 16) throw ConfigError(strf("solve_uot_bruteforce: %d x %d exceeds 16 entries", n, m));
  const double eps = options.epsilon;

  // log-domain variables; rows/cols of zero-mass atoms are pinned to zero mass
  std::vector<char> active(static_cast<size_t>(n) * static_cast<size_t>(m), 1);
  std::vector<double> z(static_cast<size_t>(n) * static_cast<size_t>(m), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const size_t k = static_cast<size_t>(i) * m + static_cast<size_t>(j);
      if (mu[static_cast<size_t>(i)] == 0.0 || nu[static_cast<size_t>(j)] == 0.0) {
        active[k] = 0;
        continue;
      }
      z[k] = std::log(mu[static_cast<size_t>(i)] * nu[static_cast<size_t>(j)]);
    }
  }

  auto objective = [&](const std::vector<double>& logs) {
    DenseMatrix pi(n, m);
    for (size_t k = 0; k < logs.size(); ++k) pi.data[k] = active[k] ? std::exp(logs[k]) : 0.0;
    return entropic_primal_value(TransportPlan::from_matrix(std::move(pi)), cost, mu, nu, psi1, psi2, eps);
  };

  auto gradient = [&](const std::vector<double>& logs, std::vector<double>& grad) {
    std::vector<double> row(static_cast<size_t>(n), 0.0), col(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const size_t k = static_cast<size_t>(i) * m + static_cast<size_t>(j);
        if (!active[k]) continue;
        const double p = std::exp(logs[k]);
        row[static_cast<size_t>(i)] += p;
        col[static_cast<size_t>(j)] += p;
      }
    double sup = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const size_t k = static_cast<size_t>(i) * m + static_cast<size_t>(j);
        if (!active[k]) {
          grad[k] = 0.0;
          continue;
        }
        const double p = std::exp(logs[k]);
        const double d = cost.at(i, j) + psi_derivative(psi1, row[static_cast<size_t>(i)] / mu[static_cast<size_t>(i)]) +
                         psi_derivative(psi2, col[static_cast<size_t>(j)] / nu[static_cast<size_t>(j)]) +
                         eps * logs[k];
        grad[k] = p * d;
        sup = std::max(sup, std::fabs(grad[k]));
      }
    }
    return sup;
  };

  // Newton step on z; the log-domain objective is locally convex around the
  // unique interior optimum, so this polishes the gradient-descent iterate
  // to the requested tolerance.
  auto newton_step = [&](std::vector<double>& logs) {
    std::vector<double> row(static_cast<size_t>(n), 0.0), col(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const size_t k = static_cast<size_t>(i) * m + static_cast<size_t>(j);
        if (!active[k]) continue;
        const double p = std::exp(logs[k]);
        row[static_cast<size_t>(i)] += p;
        col[static_cast<size_t>(j)] += p;
      }
    const int dim = n * m;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        const int k = i * m + j;
        if (!active[static_cast<size_t>(k)]) {
          hess(k, k) = 1.0;
          continue;
        }
        const double p = std::exp(logs[static_cast<size_t>(k)]);
        const double g = cost.at(i, j) +
                         psi_derivative(psi1, row[static_cast<size_t>(i)] / mu[static_cast<size_t>(i)]) +
                         psi_derivative(psi2, col[static_cast<size_t>(j)] / nu[static_cast<size_t>(j)]) +
                         eps * logs[static_cast<size_t>(k)];
        rhs(k) = -p * g;
        hess(k, k) += p * g + eps * p;
        const double curv1 = psi_second_derivative(psi1, row[static_cast<size_t>(i)] / mu[static_cast<size_t>(i)]) /
                             mu[static_cast<size_t>(i)];
        const double curv2 = psi_second_derivative(psi2, col[static_cast<size_t>(j)] / nu[static_cast<size_t>(j)]) /
                             nu[static_cast<size_t>(j)];
        for (int l = 0; l < m; ++l) {
          const int k2 = i * m + l;
          if (active[static_cast<size_t>(k2)]) hess(k, k2) += curv1 * p * std::exp(logs[static_cast<size_t>(k2)]);
        }
        for (int l = 0; l < n; ++l) {
          const int k2 = l * m + j;
          if (active[static_cast<size_t>(k2)]) hess(k, k2) += curv2 * p * std::exp(logs[static_cast<size_t>(k2)]);
        }
      }
    }
    // Levenberg damping keeps the step well-defined when the iterate is far out
    hess.diagonal().array() += 1e-14;
    Eigen::VectorXd delta = hess.ldlt().solve(rhs);
    if (!delta.allFinite()) return false;
    double limit = 1.0;
    const double max_step = delta.cwiseAbs().maxCoeff();
    if (max_step > 2.0) limit = 2.0 / max_step;  // trust region on log entries
    const double before = objective(logs);
    std::vector<double> candidate(logs);
    for (int half = 0; half < 30; ++half) {
      for (int k = 0; k < dim; ++k) candidate[static_cast<size_t>(k)] = logs[static_cast<size_t>(k)] + limit * delta(k);
      if (objective(candidate) <= before + 1e-15) {
        logs = candidate;
        return true;
      }
      limit *= 0.5;
    }
    return false;
  };

  std::vector<double> grad(z.size(), 0.0), trial(z.size(), 0.0);
  double value = objective(z);
  double step = 1.0;
  double residual = std::numeric_limits<double>::infinity();
  const double warm_target = std::max(options.tol, 1e-4);

  for (long iter = 0; iter < options.max_iters; ++iter) {
    residual = gradient(z, grad);
    if (residual < options.tol) break;
    if (residual < warm_target) {
      bool progressed = false;
      for (int t = 0; t < 200; ++t) {
        if (!newton_step(z)) break;
        progressed = true;
        residual = gradient(z, grad);
        if (residual < options.tol) break;
      }
      if (residual < options.tol) break;
      if (progressed) continue;
    }
    // backtracking line search on the log-domain descent direction
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      for (size_t k = 0; k < z.size(); ++k) trial[k] = z[k] - step * grad[k];
      const double trial_value = objective(trial);
      if (trial_value < value - 1e-20) {
        z = trial;
        value = trial_value;
        step *= 1.3;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  if (residual >= options.tol) {
    throw Error(strf("solve_uot_bruteforce: iteration cap %ld reached, residual %.3e above tolerance %.1e",
                     options.max_iters, residual, options.tol));
  }
  DenseMatrix pi(n, m);
  for (size_t k = 0; k < z.size(); ++k) pi.data[k] = active[k] ? std::exp(z[k]) : 0.0;
  return TransportPlan::from_matrix(std::move(pi));
}

double semidual_value(std::span<const double> v, std::span<const double> mu, std::span<const double> nu,
                      const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2) {
  check_masses(mu, "semidual_value: mu");
  check_masses(nu, "semidual_value: nu");
  check_shapes(mu, nu, cost);
  if (v.size() != nu.size()) {
    throw ShapeError(strf("semidual_value: potential has %zu values, nu has %zu atoms", v.size(), nu.size()));
  }
  double value = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) {
    double vc = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < nu.size(); ++j) {
      vc = std::min(vc, cost.at(static_cast<int>(i), static_cast<int>(j)) - v[j]);
    }
    value += mu[i] * psi_star(psi1, -vc);
  }
  for (size_t j = 0; j < nu.size(); ++j) value += nu[j] * psi_star(psi2, -v[j]);
  return value;
}

}  // namespace uotlab
