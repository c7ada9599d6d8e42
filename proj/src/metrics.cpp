// SPDX-License-Identifier: Apache-2.0
#include "uotlab/metrics.hpp"

#include <cmath>

#include "eigen_map.hpp"
#include "uotlab/rng.hpp"

namespace uotlab {

long count_forget(const DenseMatrix& samples, const GmmSpec& spec, int forget_index, double k_sigma) {
  if (forget_index < 0 || forget_index >= spec.mode_count()) {
    throw ConfigError(strf("count_forget: forget index %d out of range", forget_index));
  }
  long count = 0;
  for (int r = 0; r < samples.rows; ++r) {
    auto mode = nearest_mode(samples.row(r), spec, k_sigma);
    if (mode.has_value() && *mode == forget_index) count++;
  }
  return count;
}

double pul(long n_pre, long n_unl) {
  if (n_pre < 1) throw ConfigError(strf("pul: pretrained count %ld leaves the ratio undefined", n_pre));
  return static_cast<double>(n_pre - n_unl) / static_cast<double>(n_pre) * 100.0;
}

namespace {

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GaussianFit fit_gaussian(const DenseMatrix& x) {
  const int n = x.rows;
  GaussianFit fit;
  fit.mean = emap(x).colwise().mean().transpose();
  Eigen::MatrixXd centered = emap(x).rowwise() - fit.mean.transpose();
  fit.cov = centered.transpose() * centered / static_cast<double>(n);
  fit.cov.diagonal().array() += 1e-10;  // jitter against degenerate fits
  return fit;
}

// symmetric PSD square root by eigendecomposition
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw Error(strf("%s: eigendecomposition failed", what));
  Eigen::VectorXd ev = solver.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8) throw Error(strf("%s: negative eigenvalue %.3e", what, ev(i)));
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double frechet_gaussian(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.cols != y.cols) throw ShapeError(strf("frechet_gaussian: %d vs %d columns", x.cols, y.cols));
  if (x.rows < x.cols + 1 || y.rows < y.cols + 1) {
    throw ConfigError(strf("frechet_gaussian: needs more than dimension+1 samples, got %d and %d", x.rows,
                           y.rows));
  }
  GaussianFit fx = fit_gaussian(x);
  GaussianFit fy = fit_gaussian(y);

  const double mean_term = (fx.mean - fy.mean).squaredNorm();
  // tr((Sx Sy)^{1/2}) via the symmetric form (Sx^{1/2} Sy Sx^{1/2})^{1/2}
  Eigen::MatrixXd rx = psd_sqrt(fx.cov, "frechet_gaussian: cov X");
  Eigen::MatrixXd inner = rx * fy.cov * rx;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
  if (solver.info() != Eigen::Success) throw Error("frechet_gaussian: inner eigendecomposition failed");
  double cross = 0.0;
  for (int i = 0; i < solver.eigenvalues().size(); ++i) {
    const double ev = solver.eigenvalues()(i);
    if (ev < -1e-8) throw Error(strf("frechet_gaussian: non-PSD intermediate, eigenvalue %.3e", ev));
    cross += std::sqrt(std::max(0.0, ev));
  }
  const double value = mean_term + fx.cov.trace() + fy.cov.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

EvalReport evaluate_samples(const DenseMatrix& samples, std::optional<long> pretrained_forget_count,
                            const GmmSpec& spec, int forget_index, const EvalConfig& cfg) {
  spec.validate();
  if (forget_index < 0 || forget_index >= spec.mode_count()) {
    throw ConfigError(strf("evaluate: forget index %d out of range", forget_index));
  }
  EvalReport report;
  report.n_samples = samples.rows;
  report.seed = cfg.seed;
  report.mode_masses.assign(static_cast<size_t>(spec.mode_count()), 0.0);

  long oos = 0;
  std::vector<long> counts(static_cast<size_t>(spec.mode_count()), 0);
  for (int r = 0; r < samples.rows; ++r) {
    auto mode = nearest_mode(samples.row(r), spec, cfg.k_sigma);
    if (mode.has_value()) {
      counts[static_cast<size_t>(*mode)]++;
    } else {
      oos++;
    }
  }
  for (int k = 0; k < spec.mode_count(); ++k) {
    report.mode_masses[static_cast<size_t>(k)] =
        static_cast<double>(counts[static_cast<size_t>(k)]) / samples.rows;
  }
  report.oos_mass = static_cast<double>(oos) / samples.rows;
  report.forget_count = counts[static_cast<size_t>(forget_index)];

  if (pretrained_forget_count.has_value()) {
    report.pul_percent = pul(*pretrained_forget_count, report.forget_count);
  } else {
    report.pul_percent = 0.0;  // the report itself is the baseline
  }

  // references: fresh mixture and retain-only draws on derived eval seeds
  DenseMatrix full_ref = samples_to_matrix(sample_gmm(spec, samples.rows, derive_seed(cfg.seed, "eval.full")));
  GmmSpec retain_spec = spec.without_mode(forget_index);
  DenseMatrix retain_ref =
      samples_to_matrix(sample_gmm(retain_spec, samples.rows, derive_seed(cfg.seed, "eval.retain")));
  report.frechet_full = frechet_gaussian(samples, full_ref);
  report.frechet_retain = frechet_gaussian(samples, retain_ref);
  return report;
}

EvalReport evaluate(const OneStepGenerator& gen, std::optional<long> pretrained_forget_count,
                    const GmmSpec& spec, int forget_index, const EvalConfig& cfg) {
  if (cfg.n_samples < spec.dimension + 2) throw ConfigError("evaluate: too few samples requested");
  DenseMatrix samples = generate(gen, cfg.n_samples, derive_seed(cfg.seed, "eval.noise"));
  return evaluate_samples(samples, pretrained_forget_count, spec, forget_index, cfg);
}

}  // namespace uotlab
