// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "uotlab/entropy.hpp"
#include "uotlab/rng.hpp"

using namespace uotlab;

namespace {

// Grid-search conjugate oracle: sup_r (r s - psi(r)) over a dense r-grid.
// The grid upper end is stretched so the KL argmax r* = exp(s/scale) stays
// interior; grid density keeps the bracketing error far below 1e-3 because
// the curvature at the optimum decays like scale/r*.
double grid_conjugate(const EntropyFn& fn, double s) {
  double r_max = 10.0;
  if (fn.kind == EntropyKind::KL) r_max = std::max(10.0, 1.5 * std::exp(s / fn.scale));
  const int n = 100000;
  const double step = r_max / n;
  double best = -psi(fn, 0.0);
  for (int k = 1; k <= n; ++k) {
    const double r = k * step;
    best = std::max(best, r * s - psi(fn, r));
  }
  return best;
}

}  // namespace

TEST_CASE("psi: stated values") {
  EntropyFn kl{EntropyKind::KL, 1.0};
  EntropyFn chi{EntropyKind::ChiSquare, 1.0};
  CHECK(psi(kl, 1.0) == doctest::Approx(0.0));
  CHECK(psi(chi, 0.0) == doctest::Approx(1.0));
  CHECK(psi(kl, 2.0) == doctest::Approx(2.0 * std::log(2.0) - 1.0));
  CHECK(psi(kl, 0.0) == doctest::Approx(1.0));  // r -> 0 limit
  CHECK_THROWS_AS(psi(kl, -0.1), ConfigError);
}

TEST_CASE("psi is non-negative, convex, zero exactly at r = 1") {
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    for (double scale : {0.5, 1.0, 2.0}) {
      EntropyFn fn{kind, scale};
      CHECK(psi(fn, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
      double prev = psi(fn, 0.0), prev2 = 0.0;
      bool first = true;
      for (double r = 0.01; r < 6.0; r += 0.01) {
        const double v = psi(fn, r);
        CHECK(v >= -1e-15);
        if (std::fabs(r - 1.0) > 1e-9) CHECK(v > 0.0);
        if (!first) {
          const double second_diff = v - 2.0 * prev + prev2;
          CHECK(second_diff >= -1e-9);
        }
        prev2 = prev;
        prev = v;
        first = false;
      }
    }
  }
}

TEST_CASE("psi_star: stated KL values") {
  EntropyFn kl{EntropyKind::KL, 1.0};
  CHECK(psi_star(kl, 0.0) == doctest::Approx(0.0));
  CHECK(psi_star(kl, 1.0) == doctest::Approx(std::exp(1.0) - 1.0));
}

TEST_CASE("psi_star: chi-square branch and kink") {
  EntropyFn chi{EntropyKind::ChiSquare, 1.0};
  CHECK(psi_star(chi, -3.0) == doctest::Approx(-1.0));
  CHECK(psi_star(chi, -2.0) == doctest::Approx(-1.0));
  CHECK(psi_star(chi, 2.0) == doctest::Approx(3.0));
  EntropyFn chi2{EntropyKind::ChiSquare, 2.0};
  CHECK(psi_star(chi2, 2.0) == doctest::Approx(2.0 * (1.0 + 0.25)));
}

TEST_CASE("psi_star matches the grid-search conjugate within 1e-3") {
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    for (double scale : {0.5, 1.0, 2.0}) {
      EntropyFn fn{kind, scale};
      double worst = 0.0;
      for (double s = -3.0; s <= 3.0 + 1e-12; s += 0.25) {
        worst = std::max(worst, std::fabs(psi_star(fn, s) - grid_conjugate(fn, s)));
      }
      CHECK(worst < 1e-3);
    }
  }
}

TEST_CASE("conjugate duality on 200 random s values") {
  Rng rng(2024);
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    EntropyFn fn{kind, 1.0};
    for (int t = 0; t < 100; ++t) {
      const double s = -3.0 + 6.0 * rng.uniform();
      CHECK(std::fabs(psi_star(fn, s) - grid_conjugate(fn, s)) < 1e-3);
    }
  }
}

TEST_CASE("psi_star is nondecreasing and convex on [-3, 3]") {
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    for (double scale : {0.5, 1.0, 2.0}) {
      EntropyFn fn{kind, scale};
      std::vector<double> values;
      for (double s = -3.0; s <= 3.0 + 1e-12; s += 0.01) values.push_back(psi_star(fn, s));
      for (size_t i = 1; i < values.size(); ++i) CHECK(values[i] - values[i - 1] >= -1e-12);
      for (size_t i = 2; i < values.size(); ++i) {
        CHECK(values[i] - 2.0 * values[i - 1] + values[i - 2] >= -1e-9);
      }
    }
  }
}

TEST_CASE("Fenchel-Young inequality on random pairs") {
  Rng rng(555);
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    for (double scale : {0.5, 1.0, 2.0}) {
      EntropyFn fn{kind, scale};
      for (int t = 0; t < 2000; ++t) {
        const double r = 10.0 * rng.uniform();
        const double s = -3.0 + 6.0 * rng.uniform();
        CHECK(psi(fn, r) + psi_star(fn, s) >= r * s - 1e-9);
      }
    }
  }
}

TEST_CASE("clamp: inputs above 20*scale are capped and counted") {
  EntropyFn kl{EntropyKind::KL, 1.0};
  ClampStats stats;
  const double capped = psi_star(kl, 25.0, 20.0, &stats);
  CHECK(stats.clamped == 1);
  CHECK(capped == doctest::Approx(std::expm1(20.0)));
  psi_star(kl, 3.0, 20.0, &stats);
  CHECK(stats.clamped == 1);

  // derivative keeps the boundary slope rather than dropping to zero
  CHECK(psi_star_derivative(kl, 25.0, 20.0) == doctest::Approx(std::exp(20.0)));
}

TEST_CASE("psi_star_derivative matches central differences") {
  Rng rng(9);
  for (EntropyKind kind : {EntropyKind::KL, EntropyKind::ChiSquare}) {
    for (double scale : {0.5, 1.0, 2.0}) {
      EntropyFn fn{kind, scale};
      for (int t = 0; t < 200; ++t) {
        double s = -3.0 + 6.0 * rng.uniform();
        if (kind == EntropyKind::ChiSquare && std::fabs(s / scale + 2.0) < 1e-3) continue;  // kink
        const double h = 1e-6;
        const double numeric = (psi_star(fn, s + h) - psi_star(fn, s - h)) / (2.0 * h);
        CHECK(psi_star_derivative(fn, s) == doctest::Approx(numeric).epsilon(1e-5));
      }
    }
  }
}
