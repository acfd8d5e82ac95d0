#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "errors.hpp"

namespace adscft {

struct QuadConfig {
  double rel_tol = 1e-10;
  unsigned max_depth = 15;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;

  QuadResult& operator+=(const QuadResult& o) {
    value += o.value;
    error += o.error;
    return *this;
  }
};

using Integrand = std::function<double(double)>;

// Adaptive Gauss-Kronrod (31 point) on a finite interval.
inline QuadResult integrate_gk(const Integrand& f, double a, double b, const QuadConfig& q = {}) {
  if (a == b) return {};
  double err = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, q.max_depth,
                                                                          q.rel_tol, &err);
  // boost sums the leaf errors on the reference interval [-1,1]; the
  // half-length bounds the rescaling since leaves are no longer than the whole
  return {v, err * 0.5 * std::abs(b - a)};
}

// Tanh-sinh for integrable endpoint singularities.
inline QuadResult integrate_ts(const Integrand& f, double a, double b, const QuadConfig& q = {}) {
  if (a == b) return {};
  thread_local boost::math::quadrature::tanh_sinh<double> ts(15);
  double err = 0.0;
  double v = ts.integrate(f, a, b, q.rel_tol, &err);
  return {v, err};
}

// Fixed-order Gauss-Legendre, no error estimate.
template <unsigned N = 20>
inline double integrate_gl(const Integrand& f, double a, double b) {
  return boost::math::quadrature::gauss<double, N>::integrate(f, a, b);
}

namespace detail {

// Adaptive GK over consecutive panels. A first fixed-order pass sets the scale,
// so panels far below it are not refined toward their own relative tolerance.
inline QuadResult integrate_breaks(const Integrand& f, const std::vector<double>& x, const QuadConfig& q) {
  const std::size_t n = x.size() - 1;
  std::vector<QuadResult> first(n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first[i] = integrate_gk(f, x[i], x[i + 1], {q.rel_tol, 0});
    scale += std::abs(first[i].value);
  }
  QuadResult r;
  for (std::size_t i = 0; i < n; ++i) {
    double target = q.rel_tol * scale / n;
    if (first[i].error <= target) {
      r += first[i];
      continue;
    }
    double mag = std::max(std::abs(first[i].value), 1e-300 * scale);
    double tol = std::clamp(q.rel_tol * scale / mag, q.rel_tol, 1e-3);
    r += integrate_gk(f, x[i], x[i + 1], {tol, q.max_depth});
  }
  return r;
}

}  // namespace detail

// Composite adaptive GK over panels of width h (oscillatory integrands).
inline QuadResult integrate_panels(const Integrand& f, double a, double b, double h,
                                   const QuadConfig& q = {}) {
  if (b <= a) return {};
  int n = std::max(1, static_cast<int>(std::ceil((b - a) / h)));
  double w = (b - a) / n;
  std::vector<double> x(n + 1);
  for (int i = 0; i <= n; ++i) x[i] = a + i * w;
  x[n] = b;
  return detail::integrate_breaks(f, x, q);
}

// Geometric panels from a to b (0 < a < b) for integrands with structure on
// every scale between.
inline QuadResult integrate_geometric(const Integrand& f, double a, double b, double ratio,
                                      const QuadConfig& q = {}) {
  if (b <= a) return {};
  std::vector<double> x{a};
  while (x.back() < b) {
    double hi = std::min(b, x.back() * ratio);
    if (hi / b > 0.999) hi = b;
    x.push_back(hi);
  }
  return detail::integrate_breaks(f, x, q);
}

inline void check_converged(const QuadResult& r, double tol, const std::string& where) {
  if (!std::isfinite(r.value) || r.error > tol * std::max(std::abs(r.value), 1e-300))
    throw NumericalError(where + ": quadrature error estimate " + std::to_string(r.error) +
                             " exceeds tolerance",
                         r.error);
}

}  // namespace adscft
