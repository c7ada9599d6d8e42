// SPDX-License-Identifier: Apache-2.0
#include "uotlab/gmm.hpp"

#include <cmath>

#include "uotlab/rng.hpp"

namespace uotlab {

void GmmSpec::validate() const {
  if (dimension < 1) throw ConfigError(strf("GmmSpec: dimension %d < 1", dimension));
  if (modes.empty()) throw ConfigError("GmmSpec: no modes");
  double total = 0.0;
  for (size_t k = 0; k < modes.size(); ++k) {
    const auto& m = modes[k];
    if (static_cast<int>(m.center.size()) != dimension) {
      throw ConfigError(strf("GmmSpec: mode %zu center has %zu coords, dimension is %d", k,
                             m.center.size(), dimension));
    }
    if (m.weight <= 0.0) throw ConfigError(strf("GmmSpec: mode %zu weight %g not positive", k, m.weight));
    if (m.sigma <= 0.0) throw ConfigError(strf("GmmSpec: mode %zu sigma %g not positive", k, m.sigma));
    total += m.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw ConfigError(strf("GmmSpec: weights sum to %.12f, not 1", total));
  for (size_t a = 0; a < modes.size(); ++a) {
    for (size_t b = a + 1; b < modes.size(); ++b) {
      double d2 = 0.0;
      for (int i = 0; i < dimension; ++i) {
        const double d = modes[a].center[i] - modes[b].center[i];
        d2 += d * d;
      }
      if (d2 == 0.0) throw ConfigError(strf("GmmSpec: modes %zu and %zu share a center", a, b));
    }
  }
}

GmmSpec GmmSpec::without_mode(int index) const {
  if (index < 0 || index >= mode_count()) throw ConfigError(strf("GmmSpec: no mode %d", index));
  if (mode_count() < 2) throw ConfigError("GmmSpec: cannot drop the only mode");
  GmmSpec out;
  out.dimension = dimension;
  double total = 0.0;
  for (int k = 0; k < mode_count(); ++k) {
    if (k == index) continue;
    total += modes[k].weight;
  }
  for (int k = 0; k < mode_count(); ++k) {
    if (k == index) continue;
    GmmMode m = modes[k];
    m.weight /= total;
    out.modes.push_back(std::move(m));
  }
  return out;
}

GmmSpec GmmSpec::default_three_modes() {
  GmmSpec spec;
  spec.dimension = 2;
  const double w = 1.0 / 3.0;
  spec.modes = {
      {{0.0, 1.0}, w, 0.1},
      {{-1.0, -0.5}, w, 0.1},
      {{1.0, -0.5}, w, 0.1},
  };
  spec.validate();
  return spec;
}

std::vector<LabeledSample> sample_gmm(const GmmSpec& spec, int n, uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError(strf("sample_gmm: n = %d must be >= 1", n));
  Rng rng(seed);
  std::vector<LabeledSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    const double u = rng.uniform();
    int mode = spec.mode_count() - 1;
    double acc = 0.0;
    for (int k = 0; k < spec.mode_count(); ++k) {
      acc += spec.modes[k].weight;
      if (u < acc) {
        mode = k;
        break;
      }
    }
    LabeledSample sample;
    sample.mode_index = mode;
    sample.point.resize(static_cast<size_t>(spec.dimension));
    for (int i = 0; i < spec.dimension; ++i) {
      sample.point[i] = spec.modes[mode].center[i] + spec.modes[mode].sigma * rng.normal();
    }
    out.push_back(std::move(sample));
  }
  return out;
}

DenseMatrix sample_prior(int dimension, int n, uint64_t seed) {
  if (dimension < 1) throw ConfigError(strf("sample_prior: dimension %d < 1", dimension));
  if (n < 1) throw ConfigError(strf("sample_prior: n = %d must be >= 1", n));
  Rng rng(seed);
  DenseMatrix out(n, dimension);
  for (double& v : out.data) v = rng.normal();
  return out;
}

std::optional<int> nearest_mode(std::span<const double> point, const GmmSpec& spec, double k_sigma) {
  if (k_sigma <= 0.0) throw ConfigError(strf("nearest_mode: k_sigma %g must be positive", k_sigma));
  if (static_cast<int>(point.size()) != spec.dimension) {
    throw ShapeError(strf("nearest_mode: point has %zu coords, spec dimension is %d", point.size(),
                          spec.dimension));
  }
  int best = -1;
  double best_d2 = 0.0;
  for (int k = 0; k < spec.mode_count(); ++k) {
    double d2 = 0.0;
    for (int i = 0; i < spec.dimension; ++i) {
      const double d = point[i] - spec.modes[k].center[i];
      d2 += d * d;
    }
    if (best < 0 || d2 < best_d2) {  // strict < keeps the lowest index on ties
      best = k;
      best_d2 = d2;
    }
  }
  const double limit = k_sigma * spec.modes[best].sigma;
  if (best_d2 <= limit * limit) return best;
  return std::nullopt;
}

DenseMatrix samples_to_matrix(const std::vector<LabeledSample>& samples) {
  if (samples.empty()) return DenseMatrix();
  const int d = static_cast<int>(samples.front().point.size());
  DenseMatrix out(static_cast<int>(samples.size()), d);
  for (size_t r = 0; r < samples.size(); ++r) {
    for (int c = 0; c < d; ++c) out.at(static_cast<int>(r), c) = samples[r].point[c];
  }
  return out;
}

DataSource::DataSource(GmmSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

DenseMatrix DataSource::sample(int n, uint64_t seed) {
  accesses_ += n;
  return samples_to_matrix(sample_gmm(spec_, n, seed));
}

DenseMatrix DataSource::sample_mode(int mode, int n, uint64_t seed) {
  if (mode < 0 || mode >= spec_.mode_count()) throw ConfigError(strf("DataSource: no mode %d", mode));
  if (n < 1) throw ConfigError(strf("DataSource: n = %d must be >= 1", n));
  accesses_ += n;
  Rng rng(seed);
  DenseMatrix out(n, spec_.dimension);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < spec_.dimension; ++c) {
      out.at(r, c) = spec_.modes[mode].center[c] + spec_.modes[mode].sigma * rng.normal();
    }
  }
  return out;
}

}  // namespace uotlab
