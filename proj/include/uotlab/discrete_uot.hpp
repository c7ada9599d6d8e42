// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_DISCRETE_UOT_HPP_
#define UOTLAB_DISCRETE_UOT_HPP_

#include <span>
#include <vector>

#include "uotlab/dense_matrix.hpp"
#include "uotlab/entropy.hpp"

namespace uotlab {

struct DiscreteMeasure {
  std::vector<std::vector<double>> points;
  std::vector<double> masses;

  void validate() const;
};

struct TransportPlan {
  DenseMatrix pi;  // |mu| x |nu|, entries >= 0
  std::vector<double> row_marginals;
  std::vector<double> col_marginals;

  static TransportPlan from_matrix(DenseMatrix pi);
};

DenseMatrix cost_matrix_sqeuclidean(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// Unregularized primal objective:
//   sum c pi + sum_i mu_i psi1(pi0_i / mu_i) + sum_j nu_j psi2(pi1_j / nu_j).
// Zero-mass atoms contribute 0 when their plan marginal is 0 and +inf
// otherwise (the recession limit of both entropy kinds).
double uot_primal_value(const TransportPlan& plan, const DenseMatrix& cost, std::span<const double> mu,
                        std::span<const double> nu, const EntropyFn& psi1, const EntropyFn& psi2);

// uot_primal_value plus the entropic term epsilon * sum pi (ln pi - 1);
// the objective both solvers below minimize.
double entropic_primal_value(const TransportPlan& plan, const DenseMatrix& cost, std::span<const double> mu,
                             std::span<const double> nu, const EntropyFn& psi1, const EntropyFn& psi2,
                             double epsilon);

struct SinkhornOptions {
  double epsilon = 1e-3;
  int max_iters = 200000;
  double tol = 1e-10;
};

// Generalized Sinkhorn scaling for KL marginal penalties, run in the log
// domain throughout. Alternates
//   u_i <- (mu_i / (K v)_i)^{s1/(s1+eps)},  v_j <- (nu_j / (K^T u)_j)^{s2/(s2+eps)}
// with K = exp(-c/eps). Stops when successive scalings (or the plan, in
// near-balanced regimes where the potentials drift jointly) change by less
// than tol in sup-norm.
TransportPlan solve_uot_sinkhorn(std::span<const double> mu, std::span<const double> nu,
                                 const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2,
                                 const SinkhornOptions& options);

struct BruteForceOptions {
  double epsilon = 1e-3;
  long max_iters = 400000;
  double tol = 1e-10;
};

// Reference solver: minimizes the same strictly convex entropic objective by
// backtracking gradient descent on log(pi). Tiny instances only.
TransportPlan solve_uot_bruteforce(std::span<const double> mu, std::span<const double> nu,
                                   const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2,
                                   const BruteForceOptions& options);

// Discrete semi-dual objective with the inner infimum taken exactly over
// target atoms:
//   sum_i mu_i psi1*(-min_j [c_ij - v_j]) + sum_j nu_j psi2*(-v_j).
double semidual_value(std::span<const double> v, std::span<const double> mu, std::span<const double> nu,
                      const DenseMatrix& cost, const EntropyFn& psi1, const EntropyFn& psi2);

}  // namespace uotlab

#endif  // UOTLAB_DISCRETE_UOT_HPP_
