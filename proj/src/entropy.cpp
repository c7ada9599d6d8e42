// SPDX-License-Identifier: Apache-2.0
#include "uotlab/entropy.hpp"

#include <cmath>

namespace uotlab {

const char* entropy_kind_name(EntropyKind k) {
  return k == EntropyKind::KL ? "kl" : "chi_square";
}

EntropyKind entropy_kind_from_name(const std::string& name) {
  if (name == "kl") return EntropyKind::KL;
  if (name == "chi_square") return EntropyKind::ChiSquare;
  throw ConfigError(strf("unknown entropy kind '%s'", name.c_str()));
}

void EntropyFn::validate() const {
  if (scale <= 0.0 || !std::isfinite(scale)) {
    throw ConfigError(strf("EntropyFn: scale %g must be positive", scale));
  }
}

double psi(const EntropyFn& fn, double r) {
  fn.validate();
  if (r < 0.0) throw ConfigError(strf("psi: density ratio r = %g must be >= 0", r));
  switch (fn.kind) {
    case EntropyKind::KL:
      if (r == 0.0) return fn.scale;  // limit of r ln r - r + 1
      return fn.scale * (r * std::log(r) - r + 1.0);
    case EntropyKind::ChiSquare:
      return fn.scale * (r - 1.0) * (r - 1.0);
  }
  return 0.0;
}

double psi_derivative(const EntropyFn& fn, double r) {
  fn.validate();
  if (r <= 0.0) throw ConfigError(strf("psi_derivative: r = %g must be > 0", r));
  switch (fn.kind) {
    case EntropyKind::KL:
      return fn.scale * std::log(r);
    case EntropyKind::ChiSquare:
      return 2.0 * fn.scale * (r - 1.0);
  }
  return 0.0;
}

double psi_second_derivative(const EntropyFn& fn, double r) {
  fn.validate();
  if (r <= 0.0) throw ConfigError(strf("psi_second_derivative: r = %g must be > 0", r));
  switch (fn.kind) {
    case EntropyKind::KL:
      return fn.scale / r;
    case EntropyKind::ChiSquare:
      return 2.0 * fn.scale;
  }
  return 0.0;
}

double psi_star(const EntropyFn& fn, double s, double clamp_mult, ClampStats* stats) {
  fn.validate();
  const double cap = clamp_mult * fn.scale;
  if (s > cap) {
    if (stats != nullptr) stats->clamped += 1;
    s = cap;
  }
  const double t = s / fn.scale;
  switch (fn.kind) {
    case EntropyKind::KL:
      return fn.scale * std::expm1(t);
    case EntropyKind::ChiSquare:
      if (t < -2.0) return -fn.scale;
      return fn.scale * (t + t * t / 4.0);
  }
  return 0.0;
}

double psi_star_derivative(const EntropyFn& fn, double s, double clamp_mult) {
  fn.validate();
  const double cap = clamp_mult * fn.scale;
  if (s > cap) s = cap;
  const double t = s / fn.scale;
  switch (fn.kind) {
    case EntropyKind::KL:
      return std::exp(t);
    case EntropyKind::ChiSquare:
      if (t < -2.0) return 0.0;
      return 1.0 + t / 2.0;
  }
  return 0.0;
}

}  // namespace uotlab
