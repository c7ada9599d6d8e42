// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_ENTROPY_HPP_
#define UOTLAB_ENTROPY_HPP_

#include <string>

#include "uotlab/common.hpp"

namespace uotlab {

enum class EntropyKind { KL, ChiSquare };

const char* entropy_kind_name(EntropyKind k);
EntropyKind entropy_kind_from_name(const std::string& name);

// Convex non-negative entropy function defining the marginal penalty:
//   KL:        psi(r) = scale * (r ln r - r + 1), psi(0) = scale
//   ChiSquare: psi(r) = scale * (r - 1)^2
struct EntropyFn {
  EntropyKind kind = EntropyKind::KL;
  double scale = 1.0;

  void validate() const;
  bool operator==(const EntropyFn&) const = default;
};

double psi(const EntropyFn& fn, double r);

// Derivatives of psi on r > 0; used by the discrete brute-force oracle.
double psi_derivative(const EntropyFn& fn, double r);
double psi_second_derivative(const EntropyFn& fn, double r);

struct ClampStats {
  long long clamped = 0;
};

// Convex conjugate psi*(s) = sup_{r >= 0} (r s - psi(r)):
//   KL:        scale * expm1(s / scale)
//   ChiSquare: scale * (s/scale + (s/scale)^2 / 4) for s/scale >= -2, else -scale
// Inputs above clamp_mult * scale are clamped (and counted when stats given).
double psi_star(const EntropyFn& fn, double s, double clamp_mult = 20.0, ClampStats* stats = nullptr);

// d/ds of the clamped conjugate; beyond the clamp the boundary slope is kept.
double psi_star_derivative(const EntropyFn& fn, double s, double clamp_mult = 20.0);

}  // namespace uotlab

#endif  // UOTLAB_ENTROPY_HPP_
