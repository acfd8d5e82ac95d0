#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include "bumps.hpp"
#include "errors.hpp"
#include "interaction.hpp"
#include "kernels.hpp"
#include "lattice.hpp"
#include "params.hpp"
#include "quadrature.hpp"

namespace adscft {

// ------------------------------------------------------ generating functionals

struct FunctionalValue {
  std::string f_spec;
  double log_prefactor = 0.0;
  double mc_ratio = 1.0;
  double mc_ci = 0.0;
  double value = 1.0;
  double lo = 1.0, hi = 1.0;  // value interval from the bootstrap interval of the ratio
  double log_value = 0.0;
  double prefactor_gap = nan_v;  // relative gap between the α₊ and α₋⁻¹ prefactor routes
  int n = 0;
};

namespace detail {

inline FunctionalValue assemble(const BoundaryTestFunction& f, double log_pre, const McRatio& r) {
  FunctionalValue v;
  v.f_spec = f.describe();
  v.log_prefactor = log_pre;
  v.mc_ratio = r.ratio;
  v.n = r.n;
  v.log_value = log_pre + r.log_ratio;
  v.value = std::exp(v.log_value);
  v.lo = std::exp(log_pre + r.log_lo);
  v.hi = std::exp(log_pre + r.log_hi);
  v.mc_ci = std::exp(log_pre) * r.ci;
  return v;
}

}  // namespace detail

// ½c²α₊(f,f), the prefactor written through α₊.
inline double log_prefactor_plus(const BoundaryTestFunction& f, const BoundaryForms& F) {
  if (f.is_zero()) return 0.0;
  const double c = F.params.c;
  return 0.5 * c * c * F(f, f, Branch::plus);
}

// -½(f, α₋⁻¹ f): the α₋ Fourier weight C₋|k|^{-2ν} inverted pointwise.
inline double log_prefactor_minus_inverse(const BoundaryTestFunction& f, const BoundaryForms& F) {
  if (f.is_zero()) return 0.0;
  return -0.5 * fourier_pair_sum(f, f, 2.0 * F.params.nu) / F.constant(Branch::minus);
}

// 𝒞(f) = e^{-½(f,α₋⁻¹f)} E[e^{-V(φ+cH₊f)}]/E[e^{-V(φ)}].
inline FunctionalValue generating_C(const BoundaryTestFunction& f, const LatticeModel& M, const BoundaryForms& F,
                                    double lambda, const McConfig& mc) {
  require(M.spec.d == F.params.d && std::abs(M.spec.m2 - F.params.m2) < 1e-12,
          "generating_C: lattice and spectral parameters differ");
  double pre = log_prefactor_plus(f, F);
  McRatio r = f.is_zero() ? McRatio{} : mc_ratio(f, M, F.params, lambda, F.params.c, mc);
  FunctionalValue v = detail::assemble(f, pre, r);
  if (F.has(Branch::minus) && !f.is_zero()) {
    double alt = log_prefactor_minus_inverse(f, F);
    v.prefactor_gap = std::abs(alt - pre) / std::max(std::abs(pre), 1e-300);
  }
  return v;
}

// 𝒞̃(f) = e^{½α₊(f,f)} E[e^{-V(φ+H₊f)}]/E[e^{-V(φ)}].
inline FunctionalValue generating_tildeC(const BoundaryTestFunction& f, const LatticeModel& M,
                                         const BoundaryForms& F, double lambda, const McConfig& mc) {
  require(M.spec.d == F.params.d && std::abs(M.spec.m2 - F.params.m2) < 1e-12,
          "generating_tildeC: lattice and spectral parameters differ");
  double pre = f.is_zero() ? 0.0 : 0.5 * F(f, f, Branch::plus);
  McRatio r = f.is_zero() ? McRatio{} : mc_ratio(f, M, F.params, lambda, 1.0, mc);
  return detail::assemble(f, pre, r);
}

// ---------------------------------------------------------- free Y_z route

struct YzValue {
  double z = 0.0;
  double log_y = 0.0;      // ½[z^{-2Δ₊} G₊(f_z,f_z) - (Corr(z)f,f)]
  double log_limit = 0.0;  // ½α₊(f,f)
  double gap = 0.0;        // |e^{log_y - log_limit} - 1|
};

inline YzValue free_yz(double z, const BoundaryTestFunction& f, const BoundaryForms& F, const CorrCoefficients& C) {
  const auto& p = F.params;
  YzValue y;
  y.z = z;
  QuadResult g = equal_height_form(z, f, p);
  y.log_y = 0.5 * (std::pow(z, -2.0 * p.delta_plus) * g.value - corr_form(z, f, C));
  y.log_limit = 0.5 * F(f, f, Branch::plus);
  y.gap = std::abs(std::expm1(y.log_y - y.log_limit));
  return y;
}

// ------------------------------------------------ finite-dimensional conditioning

// φ₋ = φ₊ + Kψ with φ₊ ~ N(0,G), ψ ~ N(0,α) independent; V(φ) = λ Σ φ_i⁴.
struct ConditioningProblem {
  Eigen::MatrixXd G;
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd K;
  double lambda = 0.0;
  Eigen::VectorXd f;
};

struct ConditioningResult {
  double lhs = 0.0;  // E[δ(ψ-f)e^{-V(φ₋)}] / E[δ(ψ)e^{-V(φ₋)}] by dense quadrature of the joint density
  double rhs = 0.0;  // e^{-½fα⁻¹f} E[e^{-V(φ₊+Kf)}]/E[e^{-V(φ₊)}]
  double residual = 0.0;
};

inline ConditioningProblem random_conditioning_problem(int n_bulk, int n_bdry, double lambda, std::uint64_t seed) {
  require(n_bulk >= 1 && n_bulk <= 3 && n_bdry >= 1 && n_bdry <= 2,
          "conditioning: need 1 <= n_bulk <= 3 and 1 <= n_bdry <= 2");
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto rnd = [&](int r, int c, double s) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = s * nd(eng);
    return m;
  };
  ConditioningProblem P;
  Eigen::MatrixXd B = rnd(n_bulk, n_bulk, 0.5), C = rnd(n_bdry, n_bdry, 0.5);
  P.G = B * B.transpose() + 0.3 * Eigen::MatrixXd::Identity(n_bulk, n_bulk);
  P.alpha = C * C.transpose() + 0.4 * Eigen::MatrixXd::Identity(n_bdry, n_bdry);
  P.K = rnd(n_bulk, n_bdry, 0.6);
  P.lambda = lambda;
  P.f = rnd(n_bdry, 1, 0.7);
  return P;
}

namespace detail {

// Probabilists' Gauss-Hermite rule (weights sum to 1) by Golub-Welsch.
inline void gauss_hermite(int n, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()(i);
    w[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

inline double quartic(const Eigen::VectorXd& v, double lambda) {
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += v(i) * v(i) * v(i) * v(i);
  return lambda * s;
}

// Calls fn(index tuple) over the tensor grid n^dim.
template <class Fn>
void tensor_loop(int dim, int n, Fn&& fn) {
  std::vector<int> idx(dim, 0);
  while (true) {
    fn(idx);
    int k = 0;
    while (k < dim && ++idx[k] == n) idx[k++] = 0;
    if (k == dim) return;
  }
}

// log ∫ exp(-½[φ;y]ᵀQ[φ;y] - V(φ)) dφ by Gauss-Legendre panels on a box.
inline double log_joint_integral(const Eigen::MatrixXd& Q, const Eigen::VectorXd& y, const Eigen::VectorXd& center,
                                 const Eigen::VectorXd& half, double lambda, int panels) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> t, tw;
  for (int p = 0; p < panels; ++p) {
    double a = -1.0 + 2.0 * p / panels, h = 1.0 / panels;
    for (std::size_t j = 0; j < GL::abscissa().size(); ++j) {
      double xs[2] = {GL::abscissa()[j], -GL::abscissa()[j]};
      for (int s = 0; s < (GL::abscissa()[j] == 0.0 ? 1 : 2); ++s) {
        t.push_back(a + h * (1.0 + xs[s]));
        tw.push_back(h * GL::weights()[j]);
      }
    }
  }
  const int nb = static_cast<int>(center.size()), m = static_cast<int>(t.size());
  const int N = nb + static_cast<int>(y.size());
  Eigen::VectorXd v(N), phi(nb);
  v.tail(y.size()) = y;
  double mx = -INFINITY, acc = 0.0;
  tensor_loop(nb, m, [&](const std::vector<int>& idx) {
    double logw = 0.0;
    for (int i = 0; i < nb; ++i) {
      phi(i) = center(i) + half(i) * t[idx[i]];
      logw += std::log(half(i) * tw[idx[i]]);
    }
    v.head(nb) = phi;
    double e = logw - 0.5 * v.dot(Q * v) - quartic(phi, lambda);
    if (e > mx) {
      acc = acc * std::exp(mx - e) + 1.0;
      mx = e;
    } else {
      acc += std::exp(e - mx);
    }
  });
  return mx + std::log(acc);
}

// log E[e^{-V(Lξ + shift)}], ξ standard normal, by tensor Gauss-Hermite.
inline double log_gaussian_expectation(const Eigen::MatrixXd& L, const Eigen::VectorXd& shift, double lambda, int n) {
  std::vector<double> x, w;
  gauss_hermite(n, x, w);
  const int nb = static_cast<int>(shift.size());
  Eigen::VectorXd xi(nb);
  double mx = -INFINITY, acc = 0.0;
  tensor_loop(nb, n, [&](const std::vector<int>& idx) {
    double logw = 0.0;
    for (int i = 0; i < nb; ++i) {
      xi(i) = x[idx[i]];
      logw += std::log(w[idx[i]]);
    }
    double e = logw - quartic(L * xi + shift, lambda);
    if (e > mx) {
      acc = acc * std::exp(mx - e) + 1.0;
      mx = e;
    } else {
      acc += std::exp(e - mx);
    }
  });
  return mx + std::log(acc);
}

inline double condition_number(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : INFINITY;
}

}  // namespace detail

inline ConditioningResult finite_dim_conditioning_check(const ConditioningProblem& P, int gl_panels = 12,
                                                        int gh_nodes = 120) {
  const int nb = static_cast<int>(P.G.rows()), na = static_cast<int>(P.alpha.rows());
  require(nb >= 1 && nb <= 3 && na >= 1 && na <= 2, "conditioning: need 1 <= n_bulk <= 3 and 1 <= n_bdry <= 2");
  require(P.G.cols() == nb && P.alpha.cols() == na && P.K.rows() == nb && P.K.cols() == na && P.f.size() == na,
          "conditioning: inconsistent matrix shapes");
  require(P.lambda >= 0.0, "conditioning: coupling must be non-negative");
  if (detail::condition_number(P.alpha) > 1e8) throw ValidationError("conditioning: α is ill-conditioned");
  if (detail::condition_number(P.G) > 1e8) throw ValidationError("conditioning: G is ill-conditioned");
  const double budget = std::pow(20.0 * gl_panels, nb);
  if (budget > 2e7) throw BudgetError("conditioning: dense quadrature grid exceeds 2e7 nodes");

  // joint covariance of (φ₋, ψ)
  Eigen::MatrixXd S(nb + na, nb + na);
  S.topLeftCorner(nb, nb) = P.G + P.K * P.alpha * P.K.transpose();
  S.topRightCorner(nb, na) = P.K * P.alpha;
  S.bottomLeftCorner(na, nb) = P.alpha * P.K.transpose();
  S.bottomRightCorner(na, na) = P.alpha;
  Eigen::MatrixXd Q = S.llt().solve(Eigen::MatrixXd::Identity(nb + na, nb + na));
  Q = 0.5 * (Q + Q.transpose());

  // grid box from the conditional law of φ₋ given ψ
  Eigen::MatrixXd Saa_inv = P.alpha.llt().solve(Eigen::MatrixXd::Identity(na, na));
  Eigen::MatrixXd Sc = S.topLeftCorner(nb, nb) - S.topRightCorner(nb, na) * Saa_inv * S.bottomLeftCorner(na, nb);
  auto box = [&](const Eigen::VectorXd& y, Eigen::VectorXd& c, Eigen::VectorXd& h) {
    Eigen::VectorXd mu = S.topRightCorner(nb, na) * Saa_inv * y;
    c.resize(nb);
    h.resize(nb);
    for (int i = 0; i < nb; ++i) {
      double s = std::sqrt(Sc(i, i)), lo = std::min(0.0, mu(i)) - 11.0 * s, hi = std::max(0.0, mu(i)) + 11.0 * s;
      c(i) = 0.5 * (lo + hi);
      h(i) = 0.5 * (hi - lo);
    }
  };
  Eigen::VectorXd c1, h1, c0, h0, zero = Eigen::VectorXd::Zero(na);
  box(P.f, c1, h1);
  box(zero, c0, h0);
  double log_lhs = detail::log_joint_integral(Q, P.f, c1, h1, P.lambda, gl_panels) -
                   detail::log_joint_integral(Q, zero, c0, h0, P.lambda, gl_panels);

  Eigen::MatrixXd L = P.G.llt().matrixL();
  double quad = P.f.dot(Saa_inv * P.f);
  double log_rhs = -0.5 * quad + detail::log_gaussian_expectation(L, P.K * P.f, P.lambda, gh_nodes) -
                   detail::log_gaussian_expectation(L, Eigen::VectorXd::Zero(nb), P.lambda, gh_nodes);

  ConditioningResult r;
  r.lhs = std::exp(log_lhs);
  r.rhs = std::exp(log_rhs);
  r.residual = std::abs(std::expm1(log_lhs - log_rhs));
  return r;
}

// ------------------------------------------------------ renormalized functional

enum class QuarticConstant { stated, energy_limit };

// (γ₊Γ(Δ₊-d/2)Γ(d/2)/(2Γ(Δ₊)))⁴
inline double quartic_constant(const SpectralParams& p) {
  double b = p.gamma_plus * gamma_ratio(p.delta_plus - 0.5 * p.d, p.delta_plus) * std::tgamma(0.5 * p.d) / 2.0;
  return b * b * b * b;
}

// lim z₀^{4Δ₊-3d} E(z₀,f)/(λ∫f⁴): (γ₊π^{d/2}Γ(Δ₊-d/2)/Γ(Δ₊))⁴/(4Δ₊-3d)
inline double energy_limit_constant(const SpectralParams& p) {
  require(4.0 * p.delta_plus > 3.0 * p.d, "energy_limit_constant: needs Δ₊ > 3d/4");
  double b = p.gamma_plus * std::pow(pi, 0.5 * p.d) * gamma_ratio(p.delta_plus - 0.5 * p.d, p.delta_plus);
  return b * b * b * b / (4.0 * p.delta_plus - 3.0 * p.d);
}

inline double renormalization_constant(const SpectralParams& p, QuarticConstant which) {
  return which == QuarticConstant::stated ? quartic_constant(p) : energy_limit_constant(p);
}

// exp(½α₊(f,f) - λC∫f⁴)
inline double renormalized_functional(const BoundaryTestFunction& f, const BoundaryForms& F, double lambda,
                                      QuarticConstant which = QuarticConstant::stated) {
  require(lambda >= 0.0, "renormalized_functional: lambda must be non-negative");
  if (f.is_zero()) return 1.0;
  double C = renormalization_constant(F.params, which);
  if (!std::isfinite(C)) throw NumericalError("renormalized_functional: Γ pole in the quartic constant");
  return std::exp(0.5 * F(f, f, Branch::plus) - lambda * C * integral_f4(f));
}

struct RenormalizationCheck {
  double z0 = 0.0;
  double scaled_energy = 0.0;       // z₀^{d+4(Δ₊-d)} E(z₀,f)
  double energy_error = 0.0;
  double target_stated = 0.0;       // λ C ∫f⁴ with the stated constant
  double target_energy_limit = 0.0; // λ C ∫f⁴ with the energy-limit constant
  double ratio_stated = 0.0;
  double ratio_energy_limit = 0.0;
};

inline RenormalizationCheck renormalization_check(double z0, const BoundaryTestFunction& f, const SpectralParams& p,
                                                  double lambda, double A, double l) {
  RenormalizationCheck c;
  c.z0 = z0;
  QuadResult E = expected_energy(z0, f, p, lambda, A, l, 1e-9);
  double s = std::pow(z0, p.d + 4.0 * (p.delta_plus - p.d));
  c.scaled_energy = s * E.value;
  c.energy_error = s * E.error;
  double i4 = integral_f4(f);
  c.target_stated = lambda * quartic_constant(p) * i4;
  c.target_energy_limit = lambda * energy_limit_constant(p) * i4;
  c.ratio_stated = c.scaled_energy / c.target_stated;
  c.ratio_energy_limit = c.scaled_energy / c.target_energy_limit;
  return c;
}

// ------------------------------------------------------------- Witten graph

// H₊ of a unit-amplitude bump of width w as a function of the distance R to
// its center. With (z²+r²)^{-Δ} = Γ(Δ)⁻¹∫ t^{Δ-1} e^{-t(z²+r²)} dt the bump
// integrates in closed form:
//   γ₊ z^Δ/Γ(Δ) ∫ t^{Δ-1} e^{-tz²} (2πw²/(1+2tw²))^{d/2} e^{-tR²/(1+2tw²)} dt,
// evaluated by the trapezoid rule in u = log t. Nodes are shared by all R.
class BumpPoissonRadial {
 public:
  BumpPoissonRadial(double z, double w, double R_max, const SpectralParams& p, double du = 0.2) {
    require(z > 0.0 && w > 0.0 && R_max >= 0.0, "BumpPoissonRadial: need z, w > 0");
    const int d = p.d;
    const double D = p.delta_plus;
    const double t_small = std::min({1.0 / std::max(R_max * R_max, 1e-300), 1.0 / (w * w), 1.0 / (z * z)});
    const double u_lo = std::log(t_small) - 40.0 / D, u_hi = std::log(45.0 / (z * z));
    const double pre = p.gamma_plus * std::pow(z, D) / std::tgamma(D);
    for (double u = u_lo; u <= u_hi + du; u += du) {
      double t = std::exp(u), q = 1.0 + 2.0 * t * w * w;
      double a = pre * du * std::exp(D * u - t * z * z) * std::pow(2.0 * pi * w * w / q, 0.5 * d);
      if (a == 0.0) continue;
      a_.push_back(a);
      b_.push_back(t / q);
    }
  }

  double operator()(double R) const {
    double s = 0.0, R2 = R * R;
    for (std::size_t k = 0; k < a_.size(); ++k) s += a_[k] * std::exp(-b_[k] * R2);
    return s;
  }

 private:
  std::vector<double> a_, b_;
};

inline double bump_poisson_radial(double z, double R, double w, const SpectralParams& p) {
  return BumpPoissonRadial(z, w, R, p)(R);
}

struct WittenQuad {
  double z_min_rel = 1e-3;  // z_min = z_min_rel · smallest width
  double z_max_rel = 60.0;  // z_max = z_max_rel · (hull diameter + largest width)
  double s_panel = 1.0;     // log-z panel width
  double x_panel_rel = 1.0; // fine x panel width = x_panel_rel · max(width, z)
  int table_points = 400;
};

struct WittenResult {
  double value = 0.0;
  double coarse = 0.0;           // same integral with all panels doubled
  double error = 0.0;            // |value - coarse|
  double tail = 0.0;             // power-law tails beyond [z_min, z_max]
  double small_z_exponent = 0.0; // local log-slope of the layer integrand at z_min
  double overlap_exponent = 0.0; // 4(d-Δ₊) - d - 1: z-power where supports would overlap
  int layers = 0;
};

namespace detail {

struct WittenGeometry {
  std::vector<Bump> bumps;   // all bumps of the four functions
  std::vector<int> owner;    // function index of each bump
  std::vector<double> lo, hi;
  double wmin = INFINITY, wmax = 0.0, diameter = 0.0;
};

// Gauss-Legendre nodes on [lo,hi] along one axis: panels of width h inside the
// zones around bump centers, 4h outside.
inline void witten_axis(const WittenGeometry& Gm, int k, double lo, double hi, double zone, double h,
                        std::vector<double>& x, std::vector<double>& w) {
  using GL = boost::math::quadrature::gauss<double, 10>;
  std::vector<std::pair<double, double>> zones;
  for (const auto& b : Gm.bumps) zones.push_back({std::max(lo, b.center[k] - zone), std::min(hi, b.center[k] + zone)});
  std::sort(zones.begin(), zones.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& z : zones) {
    if (!merged.empty() && z.first <= merged.back().second) merged.back().second = std::max(merged.back().second, z.second);
    else merged.push_back(z);
  }
  auto add = [&](double a, double b, double width) {
    if (b <= a) return;
    int n = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
    double hh = (b - a) / n;
    for (int i = 0; i < n; ++i)
      for (std::size_t j = 0; j < GL::abscissa().size(); ++j)
        for (double sgn : {-1.0, 1.0}) {
          if (GL::abscissa()[j] == 0.0 && sgn > 0.0) continue;
          x.push_back(a + hh * (i + 0.5 + 0.5 * sgn * GL::abscissa()[j]));
          w.push_back(0.5 * hh * GL::weights()[j]);
        }
  };
  double cur = lo;
  for (const auto& z : merged) {
    add(cur, z.first, 4.0 * h);
    add(z.first, z.second, h);
    cur = z.second;
  }
  add(cur, hi, 4.0 * h);
}

inline double witten_layer(double z, const WittenGeometry& Gm, const SpectralParams& p, const WittenQuad& q,
                           double refine) {
  const int d = p.d;
  const double margin = 12.0 * Gm.wmax + 4.0 * z;
  std::vector<double> lo(d), hi(d);
  double diag2 = 0.0;
  for (int k = 0; k < d; ++k) {
    lo[k] = Gm.lo[k] - margin;
    hi[k] = Gm.hi[k] + margin;
    diag2 += (hi[k] - lo[k]) * (hi[k] - lo[k]);
  }
  const double R_max = std::sqrt(diag2);
  const int np = static_cast<int>(q.table_points * refine);
  const double step = R_max / (np - 1);

  std::vector<double> widths;
  std::vector<boost::math::interpolators::cardinal_cubic_b_spline<double>> splines;
  std::vector<int> table_of(Gm.bumps.size());
  for (std::size_t b = 0; b < Gm.bumps.size(); ++b) {
    double w = Gm.bumps[b].width;
    auto it = std::find(widths.begin(), widths.end(), w);
    if (it != widths.end()) {
      table_of[b] = static_cast<int>(it - widths.begin());
      continue;
    }
    BumpPoissonRadial H(z, w, R_max, p);
    std::vector<double> v(np);
    for (int i = 0; i < np; ++i) v[i] = H(i * step);
    // even in R: zero slope at the center
    splines.emplace_back(v.begin(), v.end(), 0.0, step, 0.0);
    widths.push_back(w);
    table_of[b] = static_cast<int>(widths.size()) - 1;
  }

  const double h = q.x_panel_rel * std::max(Gm.wmin, z) / refine, zone = 6.0 * Gm.wmax + 2.0 * z;
  std::vector<std::vector<double>> xs(d), ws(d);
  for (int k = 0; k < d; ++k) witten_axis(Gm, k, lo[k], hi[k], zone, h, xs[k], ws[k]);
  auto point_value = [&](const Vec& x) {
    std::array<double, 4> H{0.0, 0.0, 0.0, 0.0};
    for (std::size_t b = 0; b < Gm.bumps.size(); ++b) {
      double R = std::sqrt(dist2(x, Gm.bumps[b].center));
      H[Gm.owner[b]] += Gm.bumps[b].amplitude * splines[table_of[b]](R);
    }
    // a fixed multiplication order makes the value independent of the order of f₁..f₄
    std::sort(H.begin(), H.end());
    return ((H[0] * H[1]) * H[2]) * H[3];
  };
  double s = 0.0;
  Vec x(d);
  if (d == 1) {
    for (std::size_t i = 0; i < xs[0].size(); ++i) {
      x[0] = xs[0][i];
      s += ws[0][i] * point_value(x);
    }
  } else {
    for (std::size_t i = 0; i < xs[0].size(); ++i) {
      x[0] = xs[0][i];
      double row = 0.0;
      for (std::size_t j = 0; j < xs[1].size(); ++j) {
        x[1] = xs[1][j];
        row += ws[1][j] * point_value(x);
      }
      s += ws[0][i] * row;
    }
  }
  return std::pow(z, -d) * s;
}

inline double witten_pass(const WittenGeometry& Gm, const SpectralParams& p, const WittenQuad& q, double refine,
                          double& tail, double& slope, int& layers) {
  const double zmin = q.z_min_rel * Gm.wmin, zmax = q.z_max_rel * (Gm.diameter + Gm.wmax);
  const double smin = std::log(zmin), smax = std::log(zmax);
  using GL = boost::math::quadrature::gauss<double, 10>;
  int n = std::max(1, static_cast<int>(std::ceil((smax - smin) * refine / q.s_panel)));
  double h = (smax - smin) / n, total = 0.0;
  layers = 0;
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < GL::abscissa().size(); ++j)
      for (double sgn : {-1.0, 1.0}) {
        if (GL::abscissa()[j] == 0.0 && sgn > 0.0) continue;
        double s = smin + h * (i + 0.5 + 0.5 * sgn * GL::abscissa()[j]);
        total += 0.5 * h * GL::weights()[j] * witten_layer(std::exp(s), Gm, p, q, refine);
        ++layers;
      }
  // power-law tails in s on both ends
  double g0 = witten_layer(zmin, Gm, p, q, refine), g1 = witten_layer(2.0 * zmin, Gm, p, q, refine);
  slope = std::log(std::abs(g1 / g0)) / std::log(2.0);
  if (!(slope > 0.0) || !std::isfinite(slope))
    throw NumericalError("witten_4pt: layer integrand does not decay as z -> 0", slope);
  double gN = witten_layer(zmax, Gm, p, q, refine), gM = witten_layer(0.5 * zmax, Gm, p, q, refine);
  double up = std::log(std::abs(gM / gN)) / std::log(2.0);
  if (!(up > 0.0) || !std::isfinite(up)) throw NumericalError("witten_4pt: layer integrand does not decay as z grows", up);
  tail = g0 / slope + gN / up;
  return total + tail;
}

}  // namespace detail

// ∫_{ℍ^{d+1}} ∏ H₊f_l z^{-d-1} dz dx for four test functions with separated supports.
inline WittenResult witten_4pt(const std::array<BoundaryTestFunction, 4>& fs, const SpectralParams& p,
                               const WittenQuad& q = {}) {
  detail::WittenGeometry Gm;
  const int d = p.d;
  require(d == 1 || d == 2, "witten_4pt: d must be 1 or 2");
  Gm.lo.assign(d, INFINITY);
  Gm.hi.assign(d, -INFINITY);
  for (int l = 0; l < 4; ++l) {
    require(!fs[l].is_zero() && fs[l].dim() == d, "witten_4pt: test functions must be nonzero and match d");
    for (const auto& b : fs[l].bumps) {
      Gm.bumps.push_back(b);
      Gm.owner.push_back(l);
      Gm.wmin = std::min(Gm.wmin, b.width);
      Gm.wmax = std::max(Gm.wmax, b.width);
      for (int k = 0; k < d; ++k) {
        Gm.lo[k] = std::min(Gm.lo[k], b.center[k]);
        Gm.hi[k] = std::max(Gm.hi[k], b.center[k]);
      }
    }
  }
  for (std::size_t a = 0; a < Gm.bumps.size(); ++a)
    for (std::size_t b = 0; b < Gm.bumps.size(); ++b) {
      double r = std::sqrt(dist2(Gm.bumps[a].center, Gm.bumps[b].center));
      Gm.diameter = std::max(Gm.diameter, r);
      if (Gm.owner[a] != Gm.owner[b] && r < support_widths * (Gm.bumps[a].width + Gm.bumps[b].width))
        throw ValidationError("witten_4pt: supports of f" + std::to_string(Gm.owner[a] + 1) + " and f" +
                              std::to_string(Gm.owner[b] + 1) + " overlap");
    }
  WittenResult r;
  r.overlap_exponent = 4.0 * (d - p.delta_plus) - d - 1.0;
  double tail_c = 0.0, slope_c = 0.0;
  int layers_c = 0;
  r.coarse = detail::witten_pass(Gm, p, q, 1.0, tail_c, slope_c, layers_c);
  r.value = detail::witten_pass(Gm, p, q, 2.0, r.tail, r.small_z_exponent, r.layers);
  r.error = std::abs(r.value - r.coarse);
  return r;
}

}  // namespace adscft
