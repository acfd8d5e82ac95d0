#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bumps.hpp"
#include "errors.hpp"
#include "fit.hpp"
#include "kernels.hpp"
#include "lattice.hpp"
#include "params.hpp"
#include "quadrature.hpp"

namespace adscft {

// ---------------------------------------------------------------- potentials

// H₊f at every lattice site, one cached Fourier layer per z.
inline std::vector<double> smeared_at_sites(const LatticeModel& M, const BoundaryTestFunction& f,
                                            const SpectralParams& p) {
  require(p.d == M.spec.d, "smeared_at_sites: dimension mismatch");
  std::vector<double> h(M.size(), 0.0);
  if (f.is_zero()) return h;
  SmearedPoisson S(p, f, M.spec.l * std::sqrt(static_cast<double>(p.d)));
  for (int iz = 0; iz < M.spec.n_z; ++iz) {
    auto L = S.layer(M.sites[M.index(iz, 0)].z);
    for (int i = iz; i < M.size(); i += M.spec.n_z) h[i] = L(M.sites[i].x);
  }
  return h;
}

// λ Σ_{i ∈ region} w_i :v_i⁴:, Wick ordered against var.
inline double potential_density(const double* v, const std::vector<double>& w, const std::vector<double>& var,
                                double lambda, const std::vector<int>* region = nullptr) {
  double s = 0.0;
  if (region) {
    for (int i : *region) s += w[i] * wick_power(v[i], var[i], 4);
  } else {
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * wick_power(v[i], var[i], 4);
  }
  return lambda * s;
}

inline double potential(const FieldSample& s, const LatticeModel& M, double lambda,
                        const std::vector<int>* region = nullptr) {
  require(static_cast<int>(s.values.size()) == M.size(), "potential: sample does not belong to the model");
  return potential_density(s.values.data(), M.weights, M.wick_diag, lambda, region);
}

namespace detail {

// Route (a): Wick quartic of the shifted argument.
inline double shifted_direct(const double* v, const std::vector<double>& h, const LatticeModel& M, double lambda,
                             double scale) {
  double s = 0.0;
  for (int i = 0; i < M.size(); ++i) s += M.weights[i] * wick_power(v[i] + scale * h[i], M.wick_diag[i], 4);
  return lambda * s;
}

// Route (b): Σ_j C(4,j) :v^j: (s h)^{4-j}. Also returns Σ|terms| as the scale of rounding.
inline std::pair<double, double> shifted_binomial(const double* v, const std::vector<double>& h,
                                                  const LatticeModel& M, double lambda, double scale) {
  static constexpr std::array<double, 5> binom{1, 4, 6, 4, 1};
  double s = 0.0, mag = 0.0;
  for (int i = 0; i < M.size(); ++i) {
    double sh = scale * h[i], acc = 0.0, accm = 0.0, shp = 1.0;
    std::array<double, 5> pw;
    for (int k = 0; k <= 4; ++k) {
      pw[k] = shp;
      shp *= sh;
    }
    for (int j = 0; j <= 4; ++j) {
      double t = binom[j] * wick_power(v[i], M.wick_diag[i], j) * pw[4 - j];
      acc += t;
      accm += std::abs(t);
    }
    s += M.weights[i] * acc;
    double v2 = v[i] * v[i], C = M.wick_diag[i];
    mag += M.weights[i] * (accm + v2 * v2 + 6.0 * C * v2 + 3.0 * C * C);
  }
  return {lambda * s, std::abs(lambda) * mag};
}

}  // namespace detail

// V(φ + scale·H₊f), computed by both routes; a disagreement beyond 1e-9 of the
// term magnitudes is a bug and throws.
inline double shifted_potential(const double* v, const std::vector<double>& h, const LatticeModel& M,
                                double lambda, double scale) {
  double a = detail::shifted_direct(v, h, M, lambda, scale);
  auto [b, mag] = detail::shifted_binomial(v, h, M, lambda, scale);
  if (std::abs(a - b) > 1e-9 * std::max(mag, 1e-300))
    throw NumericalError("shifted_potential: direct and binomial routes disagree", std::abs(a - b));
  return a;
}

inline double shifted_potential(const FieldSample& s, const BoundaryTestFunction& f, const LatticeModel& M,
                                const SpectralParams& p, double lambda, double scale) {
  require(static_cast<int>(s.values.size()) == M.size(), "shifted_potential: sample does not belong to the model");
  return shifted_potential(s.values.data(), smeared_at_sites(M, f, p), M, lambda, scale);
}

// ------------------------------------------------------------ energy, variance

// λ ∫_{Λ(z₀)} (H₊f)⁴ z^{-d-1} dz dx, over [z₀,A] × [-l,l]^d.
inline QuadResult expected_energy(double z0, const BoundaryTestFunction& f, const SpectralParams& p, double lambda,
                                  double A, double l, double rel_tol = 1e-8) {
  require(!f.is_zero(), "expected_energy: f must be nonzero");
  require(z0 > 0.0 && z0 < A && l > 0.0, "expected_energy: need 0 < z0 < A and l > 0");
  require(f.dim() == p.d && p.d <= 2, "expected_energy: d must be 1 or 2 and match f");
  const int d = p.d;
  SmearedPoisson S(p, f, l * std::sqrt(static_cast<double>(d)));
  double wmin = INFINITY;
  for (const auto& b : f.bumps) wmin = std::min(wmin, b.width);
  QuadConfig inner{0.1 * rel_tol, 12};
  auto layer_integral = [&](double s) {
    double z = std::exp(s);
    auto L = S.layer(z);
    double hp = std::min(l, 0.5 * std::min(wmin, 2.0 * z) + 0.25 * wmin);
    auto q4 = [](double v) { return v * v * v * v; };
    QuadResult r;
    if (d == 1) {
      r = integrate_panels([&](double x) { return q4(L({x})); }, -l, l, hp, inner);
    } else {
      r = integrate_panels(
          [&](double y) {
            return integrate_panels([&](double x) { return q4(L({x, y})); }, -l, l, hp, inner).value;
          },
          -l, l, hp, inner);
    }
    return std::pow(z, -d) * r.value;
  };
  QuadResult r = integrate_panels(layer_integral, std::log(z0), std::log(A), 0.5, {rel_tol, 12});
  return {lambda * r.value, std::abs(lambda) * r.error};
}

// λ √(ΣΣ w w' [24C⁴ + 96C³hh' + 72C²h²h'² + 16C h³h'³]) with C the lattice covariance
// and h = H₊f at sites.
inline double sigma(const LatticeModel& M, const std::vector<double>& h, double lambda) {
  const int N = M.size();
  double s = 0.0;
  for (int i = 0; i < N; ++i) {
    double row = 0.0, hi = h[i];
    for (int j = 0; j < N; ++j) {
      double C = M.covariance(i, j), hh = hi * h[j], C2 = C * C;
      row += M.weights[j] * C * (24.0 * C2 * C + 96.0 * C2 * hh + 72.0 * C * hh * hh + 16.0 * hh * hh * hh);
    }
    s += M.weights[i] * row;
  }
  if (!(s >= 0.0)) throw NumericalError("sigma: negative variance", s);
  return std::abs(lambda) * std::sqrt(s);
}

inline double sigma(const BoundaryTestFunction& f, const LatticeModel& M, const SpectralParams& p, double lambda) {
  return sigma(M, smeared_at_sites(M, f, p), lambda);
}

// --------------------------------------------------------- hypercontractivity

// Root of log γ + 2p/(p-1) + 2 log(p-1) = 0 with p > 2. The left side
// increases in p, so a root exists iff γ < e^{-4}.
inline double optimal_p(double gamma) {
  require(gamma > 0.0 && gamma < 1.0, "optimal_p: gamma must lie in (0,1)");
  auto g = [&](double p) { return std::log(gamma) + 2.0 * p / (p - 1.0) + 2.0 * std::log(p - 1.0); };
  double lo = 2.0, hi = 4.0;
  if (g(lo) >= 0.0) throw ValidationError("optimal_p: no root with p > 2 (gamma >= e^-4)");
  while (g(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e300) throw NumericalError("optimal_p: root not bracketed");
  }
  for (int it = 0; it < 400 && hi - lo > 1e-14 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double optimal_p_residual(double gamma, double p) {
  return std::log(gamma) + 2.0 * p / (p - 1.0) + 2.0 * std::log(p - 1.0);
}

struct TailEnvelope {
  double gamma = 0.0;
  double p = 2.0;
  bool chebyshev = false;  // γ ≥ e^{-4}: no admissible p > 2, p = 2 used
  double log_tail = 0.0;   // log(γ^p (p-1)^{2p})
  double lower = 0.0;      // λ·6·c_κ²·(2l)^d·(z₀^{-d} - A^{-d})/d
  double envelope = 0.0;   // e^{-E/2} + e^{lower} · tail
  bool mass_condition = false;
};

inline TailEnvelope tail_and_envelope(double E, double sig, double lambda, double c_kappa, double z0, double A,
                                      double l, const SpectralParams& p) {
  require(E > 0.0 && sig >= 0.0, "tail_and_envelope: need E > 0 and sigma >= 0");
  TailEnvelope t;
  const int d = p.d;
  t.gamma = 2.0 * sig / E;
  if (t.gamma < std::exp(-4.0)) {
    t.p = optimal_p(t.gamma);
  } else {
    t.p = 2.0;
    t.chebyshev = true;
  }
  t.log_tail = t.p * std::log(t.gamma) + 2.0 * t.p * std::log(t.p - 1.0);
  t.lower = lambda * wick_quartic_bound * c_kappa * c_kappa * std::pow(2.0 * l, d) *
            (std::pow(z0, -d) - std::pow(A, -d)) / d;
  t.envelope = std::exp(-0.5 * E) + std::exp(t.lower + t.log_tail);
  t.mass_condition = p.delta_plus > 3.0 * d;
  return t;
}

// ----------------------------------------------------------------- MC ratio

inline double log_mean_exp(const std::vector<double>& a) {
  double m = *std::max_element(a.begin(), a.end()), s = 0.0;
  for (double v : a) s += std::exp(v - m);
  return m + std::log(s / a.size());
}

struct McRatio {
  double ratio = 1.0;
  double ci = 0.0;  // half-width of the 95% bootstrap interval
  double lo = 1.0, hi = 1.0;
  double log_ratio = 0.0;
  double log_lo = 0.0, log_hi = 0.0;  // the interval in log space, safe from underflow
  double denominator = 1.0;  // estimate of E[e^{-V(φ)}]
  double denominator_stderr = 0.0;
  int n = 0;
};

// E[e^{-V(φ+s·h)}] / E[e^{-V(φ)}] on common samples, in log space.
inline McRatio mc_ratio(const LatticeModel& M, const std::vector<double>& h, double lambda, double scale,
                        const McConfig& mc, int bootstrap = 400) {
  require(mc.n >= 1000, "mc_ratio: need at least 1000 samples");
  std::vector<double> a(mc.n), b(mc.n);
  for_each_sample(M, mc, [&](int i, const Eigen::Ref<const Eigen::VectorXd>& phi) {
    b[i] = -potential_density(phi.data(), M.weights, M.wick_diag, lambda);
    a[i] = scale == 0.0 ? b[i] : -shifted_potential(phi.data(), h, M, lambda, scale);
  });
  McRatio r;
  r.n = mc.n;
  double la = log_mean_exp(a), lb = log_mean_exp(b);
  r.log_ratio = la - lb;
  r.ratio = std::exp(r.log_ratio);
  r.denominator = std::exp(lb);
  double mb = *std::max_element(b.begin(), b.end()), s1 = 0.0, s2 = 0.0;
  for (double v : b) {
    double e = std::exp(v - mb);
    s1 += e;
    s2 += e * e;
  }
  double mean = s1 / mc.n, var = std::max(0.0, s2 / mc.n - mean * mean) * mc.n / (mc.n - 1.0);
  r.denominator_stderr = std::exp(mb) * std::sqrt(var / mc.n);

  std::mt19937_64 eng(mc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick(0, mc.n - 1);
  std::vector<double> logs(bootstrap), ra(mc.n), rb(mc.n);
  for (int k = 0; k < bootstrap; ++k) {
    for (int i = 0; i < mc.n; ++i) {
      int j = pick(eng);
      ra[i] = a[j];
      rb[i] = b[j];
    }
    logs[k] = log_mean_exp(ra) - log_mean_exp(rb);
  }
  std::sort(logs.begin(), logs.end());
  r.log_lo = logs[static_cast<int>(0.025 * (bootstrap - 1))];
  r.log_hi = logs[static_cast<int>(std::ceil(0.975 * (bootstrap - 1)))];
  r.lo = std::exp(r.log_lo);
  r.hi = std::exp(r.log_hi);
  r.ci = 0.5 * (r.hi - r.lo);
  return r;
}

inline McRatio mc_ratio(const BoundaryTestFunction& f, const LatticeModel& M, const SpectralParams& p, double lambda,
                        double scale, const McConfig& mc) {
  return mc_ratio(M, smeared_at_sites(M, f, p), lambda, scale, mc);
}

// ------------------------------------------------------------ triviality run

struct TrivialityConfig {
  int d = 1;
  double m2 = 6.25;
  double lambda = 0.1;
  BoundaryTestFunction f = BoundaryTestFunction::bump({0.0}, 0.5, 3.0);
  std::vector<double> z0_list{0.4, 0.2, 0.1, 0.05};
  double A = 10.0;
  double l = 2.0;
  int n_z = 48;
  int n_x = 48;
  int budget = 4096;
  McConfig mc{10000, 1, 1, 256};
};

struct TrivialityReport {
  std::vector<double> z0_list, E_list, sigma_list, gamma_list, p_opt_list, tail_bound_list, lower_bound_list,
      envelope_list, c_kappa_list;
  std::vector<bool> chebyshev_list;
  std::vector<McRatio> mc_ratio_list;
  bool mass_condition_met = false;
  bool ratio_decreasing = false;      // point estimates strictly decreasing
  bool first_last_separated = false;  // CI of the last entry below the CI of the first
  bool final_below_tenth = false;
  bool envelope_decreasing = false;
  bool jensen_ok = false;  // every denominator ≥ 1 - 3 stderr
};

inline TrivialityReport triviality_run(const TrivialityConfig& c) {
  require(c.z0_list.size() >= 2, "triviality_run: need at least two z0 values");
  require(!c.f.is_zero(), "triviality_run: f must be nonzero");
  auto p = spectral_params(c.d, c.m2);
  TrivialityReport R;
  R.mass_condition_met = c.m2 >= 6.0 * c.d * c.d;
  for (double z0 : c.z0_list) {
    LatticeSpec ls{z0, c.A, c.l, c.d, c.n_z, c.n_x, c.m2, c.budget};
    auto M = build_model(ls);
    auto h = smeared_at_sites(M, c.f, p);
    double E = expected_energy(z0, c.f, p, c.lambda, c.A, c.l).value;
    double sg = sigma(M, h, c.lambda);
    auto te = tail_and_envelope(E, sg, c.lambda, M.c_kappa, z0, c.A, c.l, p);
    R.z0_list.push_back(z0);
    R.E_list.push_back(E);
    R.sigma_list.push_back(sg);
    R.gamma_list.push_back(te.gamma);
    R.p_opt_list.push_back(te.p);
    R.chebyshev_list.push_back(te.chebyshev);
    R.tail_bound_list.push_back(std::exp(te.log_tail));
    R.lower_bound_list.push_back(te.lower);
    R.envelope_list.push_back(te.envelope);
    R.c_kappa_list.push_back(M.c_kappa);
    R.mc_ratio_list.push_back(mc_ratio(M, h, c.lambda, 1.0, c.mc));
  }
  const auto& m = R.mc_ratio_list;
  R.ratio_decreasing = true;
  R.envelope_decreasing = true;
  R.jensen_ok = true;
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (k > 0 && !(m[k].log_ratio < m[k - 1].log_ratio)) R.ratio_decreasing = false;
    if (k > 0 && !(R.envelope_list[k] < R.envelope_list[k - 1])) R.envelope_decreasing = false;
    if (m[k].denominator < 1.0 - 3.0 * m[k].denominator_stderr) R.jensen_ok = false;
  }
  R.first_last_separated = m.back().log_hi < m.front().log_lo;
  R.final_below_tenth = m.back().log_ratio < std::log(0.1) + m.front().log_ratio;
  return R;
}

}  // namespace adscft
