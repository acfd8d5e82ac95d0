#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include "errors.hpp"

namespace adscft {

inline constexpr double pi = std::numbers::pi;
inline constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

inline bool is_nonpos_int(double x) {
  return x <= 0.0 && x == std::round(x);
}

// 1/Γ(x), zero at the poles.
inline double rgamma(double x) {
  if (is_nonpos_int(x)) return 0.0;
  return 1.0 / std::tgamma(x);
}

// Γ(x)/Γ(y). Integer differences use the finite product, so pole/pole ratios
// come out right (Γ(0)/Γ(0) = 1). NaN when the ratio is infinite.
inline double gamma_ratio(double x, double y) {
  double diff = x - y;
  if (diff == std::round(diff) && std::abs(diff) < 64) {
    int n = static_cast<int>(diff);
    double r = 1.0;
    if (n >= 0) {
      // Γ(y+n)/Γ(y) = y(y+1)...(y+n-1)
      for (int k = 0; k < n; ++k) r *= y + k;
      return r;
    }
    for (int k = 0; k < -n; ++k) {
      double t = x + k;
      if (t == 0.0) return nan_v;
      r /= t;
    }
    return r;
  }
  if (is_nonpos_int(x)) return nan_v;
  if (is_nonpos_int(y)) return 0.0;
  double sx = std::tgamma(x), sy = std::tgamma(y);
  if (std::isfinite(sx) && std::isfinite(sy)) return sx / sy;
  int sgx = 1, sgy = 1;
  double lx = ::lgamma_r(x, &sgx), ly = ::lgamma_r(y, &sgy);
  return sgx * sgy * std::exp(lx - ly);
}

inline double pochhammer(double a, int n) {
  double r = 1.0;
  for (int k = 0; k < n; ++k) r *= a + k;
  return r;
}

inline double digamma(double x) { return boost::math::digamma(x); }

inline double hyp1f1(double a, double b, double x) {
  return boost::math::hypergeometric_1F1(a, b, x);
}

// Area of the unit sphere S^{d-1} in R^d.
inline double sphere_area(int d) {
  return 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d);
}

namespace detail {

inline double hyp2f1_series(double a, double b, double c, double x) {
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 200000; ++n) {
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * x;
    sum += term;
    if (term == 0.0) return sum;
    if (std::abs(term) <= 1e-17 * std::abs(sum) && n > 3) return sum;
  }
  throw NumericalError("hyp2f1: power series did not converge at x=" + std::to_string(x));
}

// A&S 15.3.6, non-integer s = c-a-b
inline double hyp2f1_reflect(double a, double b, double c, double y) {
  double s = c - a - b;
  double t1 = std::tgamma(c) * std::tgamma(s) * rgamma(c - a) * rgamma(c - b);
  double t2 = std::tgamma(c) * std::tgamma(-s) * rgamma(a) * rgamma(b);
  double f1 = t1 == 0.0 ? 0.0 : t1 * hyp2f1_series(a, b, 1.0 - s, y);
  double f2 = t2 == 0.0 ? 0.0 : t2 * std::pow(y, s) * hyp2f1_series(c - a, c - b, 1.0 + s, y);
  return f1 + f2;
}

// A&S 15.3.10-15.3.12, c = a+b+m with integer m
inline double hyp2f1_reflect_int(double a, double b, double c, int m, double y) {
  double ly = std::log(y);
  double gc = std::tgamma(c);
  if (m >= 0) {
    double part1 = 0.0;
    if (m > 0) {
      double s = 0.0, t = 1.0;
      for (int n = 0; n < m; ++n) {
        s += t;
        t *= (a + n) * (b + n) / ((n + 1.0) * (1.0 - m + n)) * y;
      }
      part1 = std::tgamma(m) * gc * rgamma(a + m) * rgamma(b + m) * s;
    }
    double pre = (m % 2 ? 1.0 : -1.0) * gc * rgamma(a) * rgamma(b) * std::pow(y, m);
    if (pre == 0.0) return part1;
    double psi1 = digamma(1.0), psim = digamma(m + 1.0);
    double psia = digamma(a + m), psib = digamma(b + m);
    double t = 1.0 / std::tgamma(m + 1.0), s = 0.0;
    for (int n = 0; n < 100000; ++n) {
      double add = t * (ly - psi1 - psim + psia + psib);
      s += add;
      if (n > 3 && std::abs(add) <= 1e-17 * std::abs(s)) return part1 + pre * s;
      t *= (a + m + n) * (b + m + n) / ((n + 1.0) * (n + m + 1.0)) * y;
      psi1 += 1.0 / (n + 1.0);
      psim += 1.0 / (n + m + 1.0);
      psia += 1.0 / (a + m + n);
      psib += 1.0 / (b + m + n);
    }
    throw NumericalError("hyp2f1: logarithmic connection series did not converge");
  }
  int k = -m;
  double s1 = 0.0, t = 1.0;
  for (int n = 0; n < k; ++n) {
    s1 += t;
    t *= (a - k + n) * (b - k + n) / ((n + 1.0) * (1.0 - k + n)) * y;
  }
  double part1 = std::tgamma(k) * gc * rgamma(a) * rgamma(b) * std::pow(y, -k) * s1;
  double pre = (k % 2 ? 1.0 : -1.0) * gc * rgamma(a - k) * rgamma(b - k);
  if (pre == 0.0) return part1;
  double psi1 = digamma(1.0), psik = digamma(k + 1.0);
  double psia = digamma(a), psib = digamma(b);
  double tt = 1.0 / std::tgamma(k + 1.0), s = 0.0;
  for (int n = 0; n < 100000; ++n) {
    double add = tt * (ly - psi1 - psik + psia + psib);
    s += add;
    if (n > 3 && std::abs(add) <= 1e-17 * std::abs(s)) return part1 + pre * s;
    tt *= (a + n) * (b + n) / ((n + 1.0) * (n + k + 1.0)) * y;
    psi1 += 1.0 / (n + 1.0);
    psik += 1.0 / (n + k + 1.0);
    psia += 1.0 / (a + n);
    psib += 1.0 / (b + n);
  }
  throw NumericalError("hyp2f1: logarithmic connection series did not converge");
}

}  // namespace detail

// Gauss 2F1(a,b;c;x) on [0,1) with y = 1-x supplied separately, so callers
// that know y accurately avoid the cancellation in 1-x near x = 1.
inline double hyp2f1_complement(double a, double b, double c, double x, double y) {
  if (is_nonpos_int(c)) throw ValidationError("hyp2f1: c is a non-positive integer");
  require(x >= 0.0 && y >= 0.0, "hyp2f1_complement: needs 0 <= x <= 1");
  if (x == 0.0) return 1.0;
  if (is_nonpos_int(a) || is_nonpos_int(b) || x <= 0.75) return detail::hyp2f1_series(a, b, c, x);
  double s = c - a - b;
  if (y == 0.0) {
    if (s <= 0.0) throw NumericalError("hyp2f1: divergent at x=1");
    return std::tgamma(c) * std::tgamma(s) * rgamma(c - a) * rgamma(c - b);
  }
  double m = std::round(s);
  double gap = std::abs(s - m);
  if (gap < 1e-12) return detail::hyp2f1_reflect_int(a, b, c, static_cast<int>(m), y);
  if (gap < 1e-5) {
    // the connection terms cancel catastrophically this close to an integer
    if (x <= 0.97) return detail::hyp2f1_series(a, b, c, x);
    throw NumericalError("hyp2f1: c-a-b within 1e-5 of an integer and x > 0.97");
  }
  return detail::hyp2f1_reflect(a, b, c, y);
}

// Gauss 2F1(a,b;c;x) for real x < 1 (x = 1 when c-a-b > 0).
inline double hyp2f1(double a, double b, double c, double x) {
  if (is_nonpos_int(c)) throw ValidationError("hyp2f1: c is a non-positive integer");
  if (x > 1.0) throw ValidationError("hyp2f1: x > 1 is on the branch cut");
  if (x < 0.0) {
    if (is_nonpos_int(a) || is_nonpos_int(b)) return detail::hyp2f1_series(a, b, c, x);
    // Pfaff: maps x into (0,1)
    return std::pow(1.0 - x, -a) * hyp2f1(a, c - b, c, x / (x - 1.0));
  }
  return hyp2f1_complement(a, b, c, x, 1.0 - x);
}

// (t/2)^nu K_nu(t), continuous at t = 0 with value Γ(nu)/2.
inline double bessel_k_scaled(double nu, double t) {
  if (t < 1e-300) return 0.5 * std::tgamma(nu);
  if (t > 700.0) return 0.0;
  return std::pow(0.5 * t, nu) * std::cyl_bessel_k(nu, t);
}

// Average of e^{i t cos θ} over S^{d-1}: Γ(d/2)(2/t)^{d/2-1} J_{d/2-1}(t).
inline double angular_fourier(int d, double t) {
  t = std::abs(t);
  switch (d) {
    case 1: return std::cos(t);
    case 3: return t < 1e-8 ? 1.0 - t * t / 6.0 : std::sin(t) / t;
    default: break;
  }
  double mu = 0.5 * d - 1.0;
  if (t < 1e-8) return 1.0 - t * t / (2.0 * d);
  return std::tgamma(0.5 * d) * std::pow(2.0 / t, mu) * std::cyl_bessel_j(mu, t);
}

// e^{-a} times the average of e^{a cos θ} over S^{d-1}, a >= 0.
inline double angular_exp_scaled(int d, double a) {
  a = std::abs(a);
  if (d == 1) return 0.5 * (1.0 + std::exp(-2.0 * a));
  if (d == 3) return a < 1e-8 ? 1.0 - a : -std::expm1(-2.0 * a) / (2.0 * a);
  double mu = 0.5 * d - 1.0;
  if (a < 1e-8) return 1.0 - a;
  double pref = std::tgamma(0.5 * d) * std::pow(2.0 / a, mu);
  if (a < 600.0) return pref * std::cyl_bessel_i(mu, a) * std::exp(-a);
  // Hankel asymptotic of e^{-a} I_mu(a)
  double m4 = 4.0 * mu * mu, term = 1.0, sum = 1.0;
  for (int k = 1; k < 12; ++k) {
    term *= -(m4 - (2.0 * k - 1) * (2.0 * k - 1)) / (k * 8.0 * a);
    sum += term;
  }
  return pref * sum / std::sqrt(2.0 * pi * a);
}

}  // namespace adscft
