#pragma once

#include <cmath>

#include "errors.hpp"
#include "special.hpp"

namespace adscft {

enum class Branch { plus, minus };

struct SpectralParams {
  int d = 1;
  double m2 = 0.0;
  double nu = 0.5;
  double delta_plus = 1.0;
  double delta_minus = 0.0;
  double gamma_plus = 0.0;
  double gamma_minus = 0.0;  // NaN where Γ(Δ₋) sits on a pole
  double c = 1.0;

  double delta(Branch b) const { return b == Branch::plus ? delta_plus : delta_minus; }
  double gamma(Branch b) const { return b == Branch::plus ? gamma_plus : gamma_minus; }
};

// γ = Γ(Δ) / (2 π^{d/2} Γ(Δ+1-d/2))
inline double kernel_normalization(int d, double delta) {
  return gamma_ratio(delta, delta + 1.0 - 0.5 * d) / (2.0 * std::pow(pi, 0.5 * d));
}

inline SpectralParams spectral_params(int d, double m2) {
  require(d >= 1, "spectral_params: d must be a positive integer");
  require(std::isfinite(m2), "spectral_params: m2 must be finite");
  double disc = d * d + 4.0 * m2;
  require(disc > 0.0, "spectral_params: m2 must exceed -d^2/4 (got " + std::to_string(m2) + ")");
  SpectralParams p;
  p.d = d;
  p.m2 = m2;
  p.nu = 0.5 * std::sqrt(disc);
  p.delta_plus = 0.5 * d + p.nu;
  p.delta_minus = 0.5 * d - p.nu;
  p.gamma_plus = kernel_normalization(d, p.delta_plus);
  p.gamma_minus = kernel_normalization(d, p.delta_minus);
  p.c = 2.0 * p.nu;
  return p;
}

// Mass giving a prescribed nu in dimension d.
inline double mass_for_nu(int d, double nu) { return nu * nu - 0.25 * d * d; }

}  // namespace adscft
