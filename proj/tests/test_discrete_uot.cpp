// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uotlab/discrete_uot.hpp"
#include "uotlab/rng.hpp"

using namespace uotlab;

namespace {

const EntropyFn kKl1{EntropyKind::KL, 1.0};

struct Instance {
  std::vector<double> mu, nu;
  DenseMatrix cost;
};

Instance random_instance(Rng& rng, int n, int m) {
  Instance inst;
  inst.mu.resize(static_cast<size_t>(n));
  inst.nu.resize(static_cast<size_t>(m));
  for (double& v : inst.mu) v = 0.2 + rng.uniform();
  for (double& v : inst.nu) v = 0.2 + rng.uniform();
  inst.cost = DenseMatrix(n, m);
  for (double& v : inst.cost.data) v = rng.uniform();
  return inst;
}

double marginal_deviation(const TransportPlan& plan, std::span<const double> mu, std::span<const double> nu) {
  double dev = 0.0;
  for (size_t i = 0; i < mu.size(); ++i) dev += std::fabs(plan.row_marginals[i] - mu[i]);
  for (size_t j = 0; j < nu.size(); ++j) dev += std::fabs(plan.col_marginals[j] - nu[j]);
  return dev;
}

}  // namespace

TEST_CASE("primal value: marginals matched, zero cost is zero") {
  std::vector<double> mu = {0.4, 0.6}, nu = {0.7, 0.3};
  DenseMatrix pi(2, 2);
  pi.at(0, 0) = 0.28;
  pi.at(0, 1) = 0.12;
  pi.at(1, 0) = 0.42;
  pi.at(1, 1) = 0.18;
  TransportPlan plan = TransportPlan::from_matrix(pi);
  DenseMatrix cost(2, 2);
  CHECK(uot_primal_value(plan, cost, mu, nu, kKl1, kKl1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("primal value: 1x1 with unit masses and plan equals the cost") {
  std::vector<double> one = {1.0};
  DenseMatrix pi(1, 1);
  pi.at(0, 0) = 1.0;
  DenseMatrix cost(1, 1);
  cost.at(0, 0) = 3.0;
  CHECK(uot_primal_value(TransportPlan::from_matrix(pi), cost, one, one, kKl1, kKl1) ==
        doctest::Approx(3.0));
}

TEST_CASE("primal value matches straight-line recomputation on a random 2x2") {
  Rng rng(17);
  Instance inst = random_instance(rng, 2, 2);
  DenseMatrix pi(2, 2);
  for (double& v : pi.data) v = 0.1 + rng.uniform();
  TransportPlan plan = TransportPlan::from_matrix(pi);

  double expected = 0.0;
  // column-major summation order, explicit formulas
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) expected += inst.cost.at(i, j) * plan.pi.at(i, j);
  for (int i = 0; i < 2; ++i) {
    const double r = (plan.pi.at(i, 0) + plan.pi.at(i, 1)) / inst.mu[static_cast<size_t>(i)];
    expected += inst.mu[static_cast<size_t>(i)] * (r * std::log(r) - r + 1.0);
  }
  for (int j = 0; j < 2; ++j) {
    const double r = (plan.pi.at(0, j) + plan.pi.at(1, j)) / inst.nu[static_cast<size_t>(j)];
    expected += inst.nu[static_cast<size_t>(j)] * (r * std::log(r) - r + 1.0);
  }
  CHECK(uot_primal_value(plan, inst.cost, inst.mu, inst.nu, kKl1, kKl1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sinkhorn: huge KL scales on a 2x2 instance recover exact marginals") {
  EntropyFn big{EntropyKind::KL, 1e6};
  std::vector<double> mu = {0.5, 0.5}, nu = {0.5, 0.5};
  DenseMatrix cost(2, 2);
  cost.at(0, 0) = 0.0;
  cost.at(0, 1) = 1.0;
  cost.at(1, 0) = 1.0;
  cost.at(1, 1) = 0.0;
  SinkhornOptions opt;
  opt.epsilon = 1e-2;
  TransportPlan plan = solve_uot_sinkhorn(mu, nu, cost, big, big, opt);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::fabs(plan.row_marginals[static_cast<size_t>(i)] - 0.5) < 1e-3);
    CHECK(std::fabs(plan.col_marginals[static_cast<size_t>(i)] - 0.5) < 1e-3);
  }
  // exact balanced entropic OT on this symmetric instance: pi(0,0)=pi(1,1),
  // ratio of off/on diagonal = exp(-1/eps)
  const double ratio = plan.pi.at(0, 1) / plan.pi.at(0, 0);
  CHECK(ratio == doctest::Approx(std::exp(-1.0 / opt.epsilon)).epsilon(1e-2));
}

TEST_CASE("sinkhorn: symmetric instance yields a symmetric plan") {
  Rng rng(23);
  std::vector<double> mu = {0.6, 0.4, 0.5};
  DenseMatrix cost(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const double v = rng.uniform();
      cost.at(i, j) = v;
      cost.at(j, i) = v;
    }
  SinkhornOptions opt;
  TransportPlan plan = solve_uot_sinkhorn(mu, mu, cost, kKl1, kKl1, opt);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::fabs(plan.pi.at(i, j) - plan.pi.at(j, i)) < 1e-9);
}

TEST_CASE("sinkhorn agrees with brute force on a 3x3 instance") {
  Rng rng(31);
  Instance inst = random_instance(rng, 3, 3);
  SinkhornOptions sopt;
  BruteForceOptions bopt;
  TransportPlan sink = solve_uot_sinkhorn(inst.mu, inst.nu, inst.cost, kKl1, kKl1, sopt);
  TransportPlan brute = solve_uot_bruteforce(inst.mu, inst.nu, inst.cost, kKl1, kKl1, bopt);
  for (size_t k = 0; k < sink.pi.data.size(); ++k) {
    CHECK(std::fabs(sink.pi.data[k] - brute.pi.data[k]) < 1e-4);
  }
  const double sv = uot_primal_value(sink, inst.cost, inst.mu, inst.nu, kKl1, kKl1);
  const double bv = uot_primal_value(brute, inst.cost, inst.mu, inst.nu, kKl1, kKl1);
  CHECK(std::fabs(sv - bv) < 1e-4);
}

TEST_CASE("cross-oracle agreement on 50 seeded instances up to 3x4") {
  Rng rng(2025);
  int checked = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + rng.index(2);
    const int m = 2 + rng.index(3);
    Instance inst = random_instance(rng, n, m);
    SinkhornOptions sopt;
    BruteForceOptions bopt;
    TransportPlan sink = solve_uot_sinkhorn(inst.mu, inst.nu, inst.cost, kKl1, kKl1, sopt);
    TransportPlan brute = solve_uot_bruteforce(inst.mu, inst.nu, inst.cost, kKl1, kKl1, bopt);
    for (size_t k = 0; k < sink.pi.data.size(); ++k) {
      CHECK(std::fabs(sink.pi.data[k] - brute.pi.data[k]) < 1e-4);
    }
    // primal under the sinkhorn plan within the epsilon-induced slack
    const double sv = entropic_primal_value(sink, inst.cost, inst.mu, inst.nu, kKl1, kKl1, sopt.epsilon);
    const double bv = entropic_primal_value(brute, inst.cost, inst.mu, inst.nu, kKl1, kKl1, bopt.epsilon);
    CHECK(sv <= bv + sopt.epsilon * 20.0);

    // increasing both KL scales tenfold never increases the marginal deviation
    EntropyFn kl10{EntropyKind::KL, 10.0};
    TransportPlan sink10 = solve_uot_sinkhorn(inst.mu, inst.nu, inst.cost, kl10, kl10, sopt);
    CHECK(marginal_deviation(sink10, inst.mu, inst.nu) <=
          marginal_deviation(sink, inst.mu, inst.nu) + 1e-9);
    checked++;
  }
  CHECK(checked == 50);
}

TEST_CASE("brute force: zero cost small epsilon approaches exact marginals") {
  std::vector<double> mu = {0.5, 0.5}, nu = {0.5, 0.5};
  DenseMatrix cost(2, 2);
  BruteForceOptions opt;
  opt.epsilon = 1e-4;
  TransportPlan plan = solve_uot_bruteforce(mu, nu, cost, kKl1, kKl1, opt);
  CHECK(marginal_deviation(plan, mu, nu) < 1e-2);
}

TEST_CASE("brute force: expensive 1x1 transport destroys mass") {
  std::vector<double> one = {1.0};
  DenseMatrix cost(1, 1);
  cost.at(0, 0) = 10.0;
  BruteForceOptions opt;
  TransportPlan plan = solve_uot_bruteforce(one, one, cost, kKl1, kKl1, opt);
  CHECK(plan.pi.at(0, 0) < 1.0);
  CHECK(plan.pi.at(0, 0) > 0.0);
  // 1D oracle: minimize pi*c + 2*(pi ln pi - pi + 1) + eps*(pi ln pi - pi) by scan
  double best_pi = 0.0, best_val = 1e18;
  for (double p = 1e-6; p < 1.0; p += 1e-6) {
    const double val = p * 10.0 + 2.0 * (p * std::log(p) - p + 1.0) + opt.epsilon * (p * std::log(p) - p);
    if (val < best_val) {
      best_val = val;
      best_pi = p;
    }
  }
  CHECK(plan.pi.at(0, 0) == doctest::Approx(best_pi).epsilon(1e-3));
}

TEST_CASE("brute force handles chi-square penalties") {
  EntropyFn chi{EntropyKind::ChiSquare, 1.0};
  Rng rng(47);
  Instance inst = random_instance(rng, 2, 2);
  BruteForceOptions opt;
  TransportPlan plan = solve_uot_bruteforce(inst.mu, inst.nu, inst.cost, chi, chi, opt);
  // stationarity: value should not improve under small perturbations
  const double base = entropic_primal_value(plan, inst.cost, inst.mu, inst.nu, chi, chi, opt.epsilon);
  Rng prng(48);
  for (int t = 0; t < 64; ++t) {
    DenseMatrix pert = plan.pi;
    for (double& v : pert.data) v = std::max(1e-12, v + 1e-5 * prng.normal());
    const double val =
        entropic_primal_value(TransportPlan::from_matrix(pert), inst.cost, inst.mu, inst.nu, chi, chi, opt.epsilon);
    CHECK(val >= base - 1e-9);
  }
}

TEST_CASE("semidual: stated trivial values") {
  std::vector<double> one = {1.0};
  DenseMatrix zero_cost(1, 1);
  std::vector<double> v0 = {0.0};
  CHECK(semidual_value(v0, one, one, zero_cost, kKl1, kKl1) == doctest::Approx(0.0));

  DenseMatrix cost(1, 1);
  cost.at(0, 0) = 1.0;
  std::vector<double> vhalf = {0.5};
  CHECK(semidual_value(vhalf, one, one, cost, kKl1, kKl1) ==
        doctest::Approx(2.0 * (std::exp(-0.5) - 1.0)).epsilon(1e-9));
}

TEST_CASE("semidual: dense v-grid minimum matches the primal by weak duality") {
  // J(v) >= -C for every v with equality at the optimum, so the grid minimum
  // recovers the primal value up to grid resolution and entropic bias.
  Rng rng(53);
  for (int t = 0; t < 3; ++t) {
    Instance inst = random_instance(rng, 2, 2);
    BruteForceOptions opt;
    opt.epsilon = 1e-4;
    TransportPlan plan = solve_uot_bruteforce(inst.mu, inst.nu, inst.cost, kKl1, kKl1, opt);
    const double primal = uot_primal_value(plan, inst.cost, inst.mu, inst.nu, kKl1, kKl1);

    double best = 1e18;
    double best_v0 = 0.0, best_v1 = 0.0;
    for (double v0 = -2.0; v0 <= 2.0 + 1e-12; v0 += 0.02) {
      for (double v1 = -2.0; v1 <= 2.0 + 1e-12; v1 += 0.02) {
        std::vector<double> v = {v0, v1};
        const double j = semidual_value(v, inst.mu, inst.nu, inst.cost, kKl1, kKl1);
        if (j < best) {
          best = j;
          best_v0 = v0;
          best_v1 = v1;
        }
      }
    }
    CHECK(std::fabs(best_v0) < 1.99);  // argmin interior to the grid
    CHECK(std::fabs(best_v1) < 1.99);
    CHECK(-best <= primal + 1e-3);             // weak duality
    CHECK(-best >= primal - 20.0 * opt.epsilon - 2e-3);  // near-strong duality at small epsilon
  }
}

TEST_CASE("solver input validation") {
  std::vector<double> mu = {0.5, 0.5}, nu = {1.0};
  DenseMatrix cost(2, 2);
  CHECK_THROWS_AS(solve_uot_sinkhorn(mu, nu, cost, kKl1, kKl1, {}), ShapeError);
  EntropyFn chi{EntropyKind::ChiSquare, 1.0};
  std::vector<double> nu2 = {0.5, 0.5};
  CHECK_THROWS_AS(solve_uot_sinkhorn(mu, nu2, cost, chi, kKl1, {}), ConfigError);
  DenseMatrix big(4, 5);
  std::vector<double> mu4 = {1, 1, 1, 1}, nu5 = {1, 1, 1, 1, 1};
  CHECK_THROWS_AS(solve_uot_bruteforce(mu4, nu5, big, kKl1, kKl1, {}), ConfigError);
}

TEST_CASE("an empty or all-zero measure is rejected") {
  std::vector<double> zero = {0.0};
  std::vector<double> one = {1.0};
  DenseMatrix cost(1, 1);
  CHECK_THROWS_AS(solve_uot_sinkhorn(zero, one, cost, kKl1, kKl1, {}), ConfigError);
  DiscreteMeasure m;
  m.points = {{0.0}};
  m.masses = {0.0};
  CHECK_THROWS_AS(m.validate(), ConfigError);
}
