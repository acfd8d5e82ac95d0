#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bumps.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "params.hpp"
#include "quadrature.hpp"
#include "special.hpp"

namespace adscft {

// ---------------------------------------------------------------- propagators

// G±(u) = γ± (2u)^{-Δ} F(Δ, Δ+(1-d)/2; 2Δ+1-d; -2/u), evaluated through the
// quadratic transformation 2^{-Δ} ξ^Δ F(Δ/2, (Δ+1)/2; Δ-d/2+1; ξ^2), ξ = 1/(1+u),
// which keeps the argument in [0,1) for every u > 0.
inline double bulk_propagator(double u, const SpectralParams& p, Branch b) {
  if (!(u > 0.0)) throw ValidationError("bulk_propagator: u = 0 is the on-diagonal singularity");
  const double D = p.delta(b), g = p.gamma(b);
  if (!std::isfinite(g)) throw ValidationError("bulk_propagator: normalization γ has a Γ pole for this branch");
  const double xi = 1.0 / (1.0 + u);
  const double y = u * (2.0 + u) * xi * xi;  // 1 - ξ², exact for small u
  try {
    double F = hyp2f1_complement(0.5 * D, 0.5 * (D + 1.0), D - 0.5 * p.d + 1.0, xi * xi, y);
    return g * std::pow(0.5 * xi, D) * F;
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("bulk_propagator at u=") + std::to_string(u) +
                             (u < 1.0 ? " (near-diagonal regime): " : " (far regime): ") + e.what(),
                         e.estimate);
  }
}

inline double bulk_propagator(const BulkPoint& p, const BulkPoint& q, const SpectralParams& s, Branch b) {
  return bulk_propagator(chordal_u(p, q), s, b);
}

// H₊(z,x;x') = γ₊ (z / (z² + |x-x'|²))^{Δ₊}
inline double bulk_to_boundary(double z, const Vec& x, const Vec& xp, const SpectralParams& p) {
  require(z > 0.0, "bulk_to_boundary: z must be positive");
  return p.gamma_plus * std::pow(z / (z * z + dist2(x, xp)), p.delta_plus);
}

// α±(x,x') = γ± |x-x'|^{-2Δ±}, off the diagonal.
inline double boundary_kernel(const Vec& x, const Vec& xp, const SpectralParams& p, Branch b) {
  double r2 = dist2(x, xp);
  require(r2 > 0.0, "boundary_kernel: coincident points");
  return p.gamma(b) * std::pow(r2, -p.delta(b));
}

// ------------------------------------------------------------- Fourier tools

// ∫_{R^d} |k|^p e^{-a k²} e^{ik·R} dk
inline double power_moment(int d, double p, double a, double R) {
  double h = 0.5 * (d + p);
  require(h > 0.0, "power_moment: |k|^p not integrable at the origin");
  return std::pow(pi, 0.5 * d) * gamma_ratio(h, 0.5 * d) * std::pow(a, -h) *
         hyp1f1(h, 0.5 * d, -R * R / (4.0 * a));
}

// ∫ |k|^p f̂(k) conj(ĝ(k)) dk with unitary transforms.
inline double fourier_pair_sum(const BoundaryTestFunction& f, const BoundaryTestFunction& g, double p) {
  const int d = f.dim();
  require(d == g.dim(), "test function dimensions differ");
  double s = 0.0;
  for (const auto& bi : f.bumps)
    for (const auto& bj : g.bumps) {
      double a = 0.5 * (bi.width * bi.width + bj.width * bj.width);
      double R = std::sqrt(dist2(bi.center, bj.center));
      s += bi.amplitude * bj.amplitude * std::pow(bi.width * bj.width, d) * power_moment(d, p, a, R);
    }
  return s;
}

// Radial quadrature nodes on [0,kmax]: composite 20-point Gauss-Legendre.
inline void radial_nodes(double kmax, double h, std::vector<double>& k, std::vector<double>& w) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const auto& xa = GL::abscissa();
  const auto& wa = GL::weights();
  int n = std::max(4, static_cast<int>(std::ceil(kmax / h)));
  double hw = kmax / n;
  k.clear();
  w.clear();
  for (int i = 0; i < n; ++i) {
    double mid = (i + 0.5) * hw, half = 0.5 * hw;
    for (std::size_t j = 0; j < xa.size(); ++j) {
      k.push_back(mid - half * xa[j]);
      w.push_back(half * wa[j]);
      if (xa[j] != 0.0) {
        k.push_back(mid + half * xa[j]);
        w.push_back(half * wa[j]);
      }
    }
  }
}

// H₊f(z,x) = ∫ H₊(z,x;y) f(y) dy, via the radial Fourier representation
//   per bump: A w^d γ₊ z^{d-Δ} 2^{1-d/2}/Γ(Δ) ∫ (kz/2)^ν K_ν(kz) e^{-w²k²/2} e^{ik·(c-x)} dk.
// A layer caches the k-nodes at fixed z so many x evaluations are cheap.
class SmearedPoisson {
 public:
  struct Layer {
    int d = 1;
    double z = 1.0;
    struct Part {
      Vec center;
      double coef;
      std::vector<double> k, g;
    };
    std::vector<Part> parts;

    double operator()(const Vec& x) const {
      double s = 0.0;
      for (const auto& pt : parts) {
        double R = std::sqrt(dist2(pt.center, x)), acc = 0.0;
        for (std::size_t i = 0; i < pt.k.size(); ++i) acc += pt.g[i] * angular_fourier(d, pt.k[i] * R);
        s += pt.coef * acc;
      }
      return s;
    }
  };

  SmearedPoisson(const SpectralParams& p, BoundaryTestFunction f, double r_max)
      : p_(p), f_(std::move(f)), r_max_(r_max) {
    f_.validate();
    require(f_.dim() == p.d, "SmearedPoisson: test function dimension differs from d");
  }

  Layer layer(double z) const {
    require(z > 0.0, "H₊f: z must be positive");
    Layer L;
    L.d = p_.d;
    L.z = z;
    const int d = p_.d;
    const double nu = p_.nu, D = p_.delta_plus;
    const double pref = p_.gamma_plus * std::pow(z, d - D) * std::pow(2.0, 1.0 - 0.5 * d) / std::tgamma(D);
    const double area = sphere_area(d);
    for (const auto& b : f_.bumps) {
      Layer::Part pt;
      pt.center = b.center;
      pt.coef = b.amplitude * std::pow(b.width, d) * pref * area;
      double kmax = std::min(40.0 / b.width, 745.0 / z);
      double reach = r_max_ + std::sqrt(norm2(b.center));
      double h = std::min(kmax / 16.0, pi / (2.0 * std::max(reach, 1e-3)));
      std::vector<double> w;
      radial_nodes(kmax, h, pt.k, w);
      pt.g.resize(pt.k.size());
      for (std::size_t i = 0; i < pt.k.size(); ++i) {
        double k = pt.k[i];
        pt.g[i] = w[i] * std::pow(k, d - 1) * bessel_k_scaled(nu, k * z) * std::exp(-0.5 * b.width * b.width * k * k);
      }
      L.parts.push_back(std::move(pt));
    }
    return L;
  }

  double operator()(double z, const Vec& x) const { return layer(z)(x); }
  const BoundaryTestFunction& f() const { return f_; }
  const SpectralParams& params() const { return p_; }

 private:
  SpectralParams p_;
  BoundaryTestFunction f_;
  double r_max_;
};

// Adaptive evaluation of H₊f at a single point.
inline QuadResult smeared_bulk_to_boundary(double z, const Vec& x, const BoundaryTestFunction& f,
                                           const SpectralParams& p, const QuadConfig& q = {}) {
  require(z > 0.0, "H₊f: z must be positive");
  const int d = p.d;
  const double pref = p.gamma_plus * std::pow(z, d - p.delta_plus) * std::pow(2.0, 1.0 - 0.5 * d) /
                      std::tgamma(p.delta_plus) * sphere_area(d);
  QuadResult total;
  for (const auto& b : f.bumps) {
    double R = std::sqrt(dist2(b.center, x));
    double kmax = std::min(40.0 / b.width, 745.0 / z);
    auto g = [&](double k) {
      return std::pow(k, d - 1) * bessel_k_scaled(p.nu, k * z) * std::exp(-0.5 * b.width * b.width * k * k) *
             angular_fourier(d, k * R);
    };
    double h = std::min(kmax / 8.0, pi / std::max(R, 1e-3));
    QuadResult r = integrate_panels(g, 0.0, kmax, h, q);
    double c = b.amplitude * std::pow(b.width, d) * pref;
    total.value += c * r.value;
    total.error += std::abs(c) * r.error;
  }
  return total;
}

// ------------------------------------------------------------ boundary forms

// Analytic Fourier weight of γ|x|^{-2Δ}: γ π^{d/2} 2^{d-2Δ} Γ(d/2-Δ)/Γ(Δ) |k|^{2Δ-d}.
inline double analytic_fourier_constant(const SpectralParams& p, Branch b) {
  const double D = p.delta(b);
  return p.gamma(b) * std::pow(pi, 0.5 * p.d) * std::pow(2.0, p.d - 2.0 * D) * gamma_ratio(0.5 * p.d - D, D);
}

inline bool is_integer_nu(double nu) { return std::abs(nu - std::round(nu)) < 1e-9; }

// Position-space value of ∬ γ|x-y|^{-2Δ} f(x) g(y) for two unit bumps of width
// w whose centers are sep apart; the Gaussian overlap near x = y is far below
// double precision for sep = 50w, so the kernel singularity never contributes.
inline QuadResult position_space_pair(const SpectralParams& p, Branch b, double w, double sep,
                                      const QuadConfig& q = {}) {
  const int d = p.d;
  const double D = p.delta(b), s2 = 2.0 * w * w, s = std::sqrt(s2);
  const double pre = p.gamma(b) * std::pow(2.0 * pi * w * w * w * w / s2, 0.5 * d) * sphere_area(d);
  auto g = [&](double rho) {
    return std::pow(rho, d - 1.0 - 2.0 * D) * std::exp(-0.5 * (rho - sep) * (rho - sep) / s2) *
           angular_exp_scaled(d, rho * sep / s2);
  };
  double lo = std::max(sep - 14.0 * s, 0.5 * sep), hi = sep + 14.0 * s;
  QuadResult r = integrate_gk(g, lo, hi, q);
  return {pre * r.value, std::abs(pre) * r.error};
}

// α±(f,g) = C± ∫ |k|^{±2ν} f̂ conj(ĝ) dk with C± calibrated per params.
struct BoundaryForms {
  SpectralParams params;
  double c_plus = nan_v;
  double c_minus = nan_v;

  bool has(Branch b) const { return std::isfinite(b == Branch::plus ? c_plus : c_minus); }

  double constant(Branch b) const {
    double c = b == Branch::plus ? c_plus : c_minus;
    if (!std::isfinite(c)) {
      if (b == Branch::minus)
        throw ValidationError("α₋ needs 2ν < d (|k|^{-2ν} is not locally integrable otherwise)");
      throw ValidationError("α₊ is excluded at integer ν (logarithmic Fourier weight)");
    }
    return c;
  }

  double exponent(Branch b) const { return b == Branch::plus ? 2.0 * params.nu : -2.0 * params.nu; }

  double weight(Branch b, double k) const { return constant(b) * std::pow(k, exponent(b)); }

  double operator()(const BoundaryTestFunction& f, const BoundaryTestFunction& g, Branch b) const {
    double c = constant(b);
    if (f.is_zero() || g.is_zero()) return 0.0;
    require(f.dim() == params.d && g.dim() == params.d, "boundary_form: test function dimension differs from d");
    return c * fourier_pair_sum(f, g, exponent(b));
  }
};

inline double calibrate_branch(const SpectralParams& p, Branch b) {
  const double w = 1.0, sep = 50.0;
  QuadResult pos = position_space_pair(p, b, w, sep, {1e-13, 15});
  Vec c0(p.d, 0.0), c1(p.d, 0.0);
  c1[0] = sep;
  BoundaryTestFunction f = BoundaryTestFunction::bump(c0, w), g = BoundaryTestFunction::bump(c1, w);
  double p_exp = b == Branch::plus ? 2.0 * p.nu : -2.0 * p.nu;
  double four = fourier_pair_sum(f, g, p_exp);
  if (!(std::abs(four) > 0.0) || !std::isfinite(pos.value))
    throw NumericalError("boundary form calibration: degenerate reference pair");
  return pos.value / four;
}

inline BoundaryForms calibrate_forms(const SpectralParams& p) {
  BoundaryForms F;
  F.params = p;
  if (!is_integer_nu(p.nu)) F.c_plus = calibrate_branch(p, Branch::plus);
  if (2.0 * p.nu < p.d && std::isfinite(p.gamma_minus)) F.c_minus = calibrate_branch(p, Branch::minus);
  return F;
}

inline double boundary_form(const BoundaryTestFunction& f, const BoundaryTestFunction& g,
                            const SpectralParams& p, Branch b) {
  if (b == Branch::minus)
    require(2.0 * p.nu < p.d, "boundary_form: branch − requires 2ν < d");
  return calibrate_forms(p)(f, g, b);
}

// max_k |α̂₋(k) · sign·c² · α̂₊(k) - 1|; sign = -1 is the identity α₋⁻¹ = -c²α₊.
inline double inverse_identity_residual(const BoundaryForms& F, const std::vector<double>& kgrid,
                                        double sign = -1.0) {
  require(2.0 * F.params.nu < F.params.d, "inverse_identity_residual: needs 2ν < d");
  double c2 = F.params.c * F.params.c, r = 0.0;
  for (double k : kgrid) {
    require(k > 0.0, "inverse_identity_residual: k must be positive");
    r = std::max(r, std::abs(F.weight(Branch::minus, k) * sign * c2 * F.weight(Branch::plus, k) - 1.0));
  }
  return r;
}

inline double inverse_identity_residual(const SpectralParams& p, const std::vector<double>& kgrid,
                                        double sign = -1.0) {
  return inverse_identity_residual(calibrate_forms(p), kgrid, sign);
}

// ------------------------------------------------------- covariance splitting

struct SplittingResult {
  double g_minus = 0.0, g_plus = 0.0, boundary_term = 0.0;
  double residual = 0.0;  // G₋ - G₊ - boundary_term
  double relative = 0.0;  // residual / |G₋|
  double error_estimate = 0.0;
};

// ∬ H₊(p,y) c² α₋(y,y') H₊(q,y') dy dy' in Fourier form:
//   c² C₋ γ₊² 2^{2-d-2ν} (z z')^{d/2} / Γ(Δ₊)² ∫ K_ν(kz) K_ν(kz') e^{ik·(x-x')} dk
inline QuadResult splitting_boundary_term(const BulkPoint& P, const BulkPoint& Q, const BoundaryForms& F,
                                          const QuadConfig& q) {
  const SpectralParams& p = F.params;
  const int d = p.d;
  const double nu = p.nu, z1 = P.z, z2 = Q.z;
  const double R = std::sqrt(dist2(P.x, Q.x));
  const double pre = p.c * p.c * F.constant(Branch::minus) * p.gamma_plus * p.gamma_plus *
                     std::pow(2.0, 2.0 - d - 2.0 * nu) * std::pow(z1 * z2, 0.5 * d) /
                     (std::tgamma(p.delta_plus) * std::tgamma(p.delta_plus)) * sphere_area(d);
  auto g = [&](double k) {
    if (k <= 0.0) return 0.0;
    return std::pow(k, d - 1.0) * std::cyl_bessel_k(nu, k * z1) * std::cyl_bessel_k(nu, k * z2) *
           angular_fourier(d, k * R);
  };
  const double k1 = 1.0 / (z1 + z2), kmax = 80.0 / (z1 + z2);
  QuadResult r = integrate_ts(g, 0.0, k1, q);
  r += integrate_panels(g, k1, kmax, R > 0.0 ? std::min(pi / R, kmax) : kmax, q);
  return {pre * r.value, std::abs(pre) * r.error};
}

inline SplittingResult splitting_residual(const BulkPoint& P, const BulkPoint& Q, const BoundaryForms& F,
                                          const QuadConfig& q = {}) {
  const SpectralParams& p = F.params;
  require(2.0 * p.nu < p.d, "splitting_residual: needs 2ν < d");
  double u = chordal_u(P, Q);
  require(u > 0.0, "splitting_residual: p = q is the on-diagonal singularity");
  SplittingResult s;
  s.g_minus = bulk_propagator(u, p, Branch::minus);
  s.g_plus = bulk_propagator(u, p, Branch::plus);
  QuadResult bt = splitting_boundary_term(P, Q, F, q);
  s.boundary_term = bt.value;
  s.error_estimate = bt.error;
  if (!std::isfinite(bt.value) || bt.error > 1e3 * q.rel_tol * std::abs(bt.value) + 1e-14)
    throw NumericalError("splitting_residual: boundary quadrature did not converge", bt.error);
  s.residual = s.g_minus - s.g_plus - s.boundary_term;
  s.relative = s.residual / std::abs(s.g_minus);
  return s;
}

inline SplittingResult splitting_residual(const BulkPoint& P, const BulkPoint& Q, const SpectralParams& p,
                                          const QuadConfig& q = {}) {
  return splitting_residual(P, Q, calibrate_forms(p), q);
}

// ---------------------------------------------------------- Corr(z) and a_j

struct CorrCoefficients {
  int d = 1;
  double nu = 0.5;
  std::vector<double> a;          // j = 0 .. floor(nu)
  std::vector<double> a_error;    // achieved quadrature error per a_j
  double overall_prefactor = 0.0; // (2π)^{-d/2} (2^{1-ν} / (√π Γ(ν+½)))²
};

namespace detail {

inline double corr_prefactor(int d, double nu) {
  double t = std::pow(2.0, 1.0 - nu) / (std::sqrt(pi) * std::tgamma(nu + 0.5));
  return std::pow(2.0 * pi, -0.5 * d) * t * t;
}

// ∫_0^∞ J_ν(ω)² ω^{-2j-1} dω: quadrature to W, Hankel-asymptotic tail after.
inline QuadResult bessel_square_moment(double nu, int j, const QuadConfig& q) {
  const double W = 400.0, mu = 4.0 * nu * nu;
  const int e = 2 * j + 1;
  const double g0 = std::pow(0.5, 2.0 * nu) / std::pow(std::tgamma(nu + 1.0), 2);
  auto g = [&](double w) {
    if (w <= 0.0) return 0.0;
    if (w < 1e-8) return g0 * std::pow(w, 2.0 * nu - e);
    double J = std::cyl_bessel_j(nu, w);
    return J * J * std::pow(w, -e);
  };
  QuadResult r = integrate_ts(g, 0.0, 1.0, q);
  r += integrate_panels(g, 1.0, W, pi, q);
  // J² ≈ (1/πω)[1 + (μ-1)/(8ω²) + cos 2χ - (μ-1)/(4ω) sin 2χ], 2χ = 2ω - νπ - π/2
  double mean = (std::pow(W, -e) / e + (mu - 1.0) / 8.0 * std::pow(W, -e - 2) / (e + 2)) / pi;
  double th = 2.0 * W - nu * pi - 0.5 * pi;
  double gW = std::pow(W, -e - 1) / pi, dgW = -(e + 1) * std::pow(W, -e - 2) / pi;
  double osc = -0.5 * gW * std::sin(th) - 0.25 * dgW * std::cos(th);
  double hW = -(mu - 1.0) / (4.0 * pi) * std::pow(W, -e - 2);
  osc += 0.5 * hW * std::cos(th);
  r.value += mean + osc;
  r.error += std::pow(W, -e - 3);
  return r;
}

}  // namespace detail

// a_j = ∫_0^∞ (∫_0^1 cos(ωt)(1-t²)^{ν-½} dt)² ω^{2(ν-j)-1} dω, using the inner
// closed form (√π Γ(ν+½)/2)(2/ω)^ν J_ν(ω).
inline CorrCoefficients corr_coefficients(const SpectralParams& p, const QuadConfig& q = {1e-12, 15}) {
  require(!is_integer_nu(p.nu), "corr_coefficients: integer ν is excluded (logarithmic term)");
  CorrCoefficients C;
  C.d = p.d;
  C.nu = p.nu;
  C.overall_prefactor = detail::corr_prefactor(p.d, p.nu);
  const double g = std::tgamma(p.nu + 0.5);
  const double scale = pi * g * g / 4.0 * std::pow(4.0, p.nu);
  for (int j = 0; j <= static_cast<int>(std::floor(p.nu)); ++j) {
    QuadResult m = detail::bessel_square_moment(p.nu, j, q);
    if (!std::isfinite(m.value) || m.value <= 0.0)
      throw NumericalError("corr_coefficients: outer integral failed for j=" + std::to_string(j), m.error);
    C.a.push_back(scale * m.value);
    C.a_error.push_back(scale * m.error);
  }
  return C;
}

// Inner cosine integral by plain quadrature.
inline double corr_inner_direct(double omega, double nu, const QuadConfig& q) {
  auto g = [&](double t) { return std::cos(omega * t) * std::pow((1.0 - t) * (1.0 + t), nu - 0.5); };
  int n = 1 + static_cast<int>(std::ceil(omega / pi));
  double h = 1.0 / n;
  QuadResult r;
  for (int i = 0; i + 1 < n; ++i) r += integrate_gk(g, i * h, (i + 1) * h, q);
  r += integrate_ts(g, (n - 1) * h, 1.0, q);
  return r.value;
}

// Second route: both integrals by quadrature, leading-order asymptotic tail.
inline CorrCoefficients corr_coefficients_direct(const SpectralParams& p, const QuadConfig& q = {1e-11, 12}) {
  require(!is_integer_nu(p.nu), "corr_coefficients: integer ν is excluded (logarithmic term)");
  CorrCoefficients C;
  C.d = p.d;
  C.nu = p.nu;
  C.overall_prefactor = detail::corr_prefactor(p.d, p.nu);
  const double nu = p.nu, W = 400.0, g = std::tgamma(nu + 0.5);
  for (int j = 0; j <= static_cast<int>(std::floor(nu)); ++j) {
    const double e = 2.0 * (nu - j) - 1.0;
    auto outer = [&](double w) {
      if (w <= 0.0) return 0.0;
      double in = corr_inner_direct(w, nu, q);
      return in * in * std::pow(w, e);
    };
    QuadResult r = integrate_ts(outer, 0.0, 1.0, q);
    r += integrate_panels(outer, 1.0, W, pi, q);
    // inner ≈ Γ(ν+½) 2^{ν-½} ω^{-ν-½} cos(ω - (ν+½)π/2)
    double amp = g * g * std::pow(2.0, 2.0 * nu - 2.0);
    double th = 2.0 * W - (nu + 0.5) * pi;
    r.value += amp * (std::pow(W, -2.0 * j - 1) / (2.0 * j + 1) - 0.5 * std::pow(W, -2.0 * j - 2) * std::sin(th));
    C.a.push_back(r.value);
    C.a_error.push_back(r.error + amp * std::pow(W, -2.0 * j - 3));
  }
  return C;
}

// Corr form with the non-unitary transform F(k) = ∫ e^{ik·x} f(x) dx:
//   prefactor Σ_j z^{-2(ν-j)} (-1)^j a_j ∫ |F(k)|² |k|^{2j} dk
inline double corr_form(double z, const BoundaryTestFunction& f, const CorrCoefficients& C) {
  require(z > 0.0, "corr_form: z must be positive");
  if (f.is_zero()) return 0.0;
  require(f.dim() == C.d, "corr_form: dimension mismatch");
  const double conv = std::pow(2.0 * pi, 0.5 * C.d);  // undoes the (2π)^{-d/2} in the prefactor
  double s = 0.0;
  for (std::size_t j = 0; j < C.a.size(); ++j) {
    double mom = conv * fourier_pair_sum(f, f, 2.0 * j);
    s += std::pow(z, -2.0 * (C.nu - j)) * (j % 2 ? -1.0 : 1.0) * C.a[j] * mom;
  }
  return C.overall_prefactor * s;
}

// ∬ G₊(z,x; z,y) f(x) f(y) dx dy by radial reduction of the autocorrelation.
inline QuadResult equal_height_form(double z, const BoundaryTestFunction& f, const SpectralParams& p,
                                    const QuadConfig& q = {1e-13, 15}) {
  require(z > 0.0, "equal_height_form: z must be positive");
  const int d = p.d;
  struct Term {
    double pre, D, s2;
  };
  std::vector<Term> terms;
  double rho_max = 0.0;
  for (const auto& bi : f.bumps)
    for (const auto& bj : f.bumps) {
      double s2 = bi.width * bi.width + bj.width * bj.width;
      double pre = bi.amplitude * bj.amplitude *
                   std::pow(2.0 * pi * bi.width * bi.width * bj.width * bj.width / s2, 0.5 * d);
      double D = std::sqrt(dist2(bi.center, bj.center));
      terms.push_back({pre, D, s2});
      rho_max = std::max(rho_max, D + 14.0 * std::sqrt(s2));
    }
  auto h = [&](double rho) {
    double s = 0.0;
    for (const auto& t : terms)
      s += t.pre * std::exp(-0.5 * (rho - t.D) * (rho - t.D) / t.s2) * angular_exp_scaled(d, rho * t.D / t.s2);
    return s;
  };
  auto g = [&](double rho) {
    double u = 0.5 * (rho / z) * (rho / z);
    if (!(u > 1e-300)) return 0.0;
    return bulk_propagator(u, p, Branch::plus) * std::pow(rho, d - 1.0) * h(rho);
  };
  QuadResult r = integrate_ts(g, 0.0, std::min(z, rho_max), q);
  if (z < rho_max) r += integrate_geometric(g, z, rho_max, 2.0, q);
  double a = sphere_area(d);
  return {a * r.value, a * r.error};
}

}  // namespace adscft
