#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "bumps.hpp"
#include "errors.hpp"
#include "functionals.hpp"
#include "interaction.hpp"
#include "kernels.hpp"
#include "lattice.hpp"
#include "params.hpp"

namespace adscft {

using Functional = std::function<double(const BoundaryTestFunction&)>;

struct GramReport {
  std::vector<std::string> family;
  Eigen::MatrixXd gram;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  Eigen::VectorXd min_eigenvector;
  double asymmetry = 0.0;   // max |G - Gᵀ| before symmetrization
  double tol = 1e-10;       // relative tolerance of the PSD verdict
  double threshold = 0.0;   // min eigenvalue must be ≥ -threshold
  double stderr_min = 0.0;  // Monte-Carlo standard error of the min eigenvalue
  bool statistical = false;
  bool psd = true;
};

// Symmetrizes, diagonalizes and applies min ≥ -tol·max(|max|, tiny).
inline GramReport make_report(const Eigen::MatrixXd& G, std::vector<std::string> family, double tol = 1e-10) {
  GramReport r;
  r.family = std::move(family);
  r.asymmetry = (G - G.transpose()).cwiseAbs().maxCoeff();
  r.gram = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.gram);
  if (es.info() != Eigen::Success) throw NumericalError("gram: eigen-decomposition failed");
  r.min_eigenvalue = es.eigenvalues()(0);
  r.max_eigenvalue = es.eigenvalues()(es.eigenvalues().size() - 1);
  r.min_eigenvector = es.eigenvectors().col(0);
  r.tol = tol;
  r.threshold = tol * std::max(std::abs(r.max_eigenvalue), 1e-300);
  r.psd = r.min_eigenvalue >= -r.threshold;
  return r;
}

inline std::vector<std::string> describe_all(const std::vector<BoundaryTestFunction>& fam) {
  std::vector<std::string> out;
  for (const auto& f : fam) out.push_back(f.describe());
  return out;
}

// ------------------------------------------------------------- functionals

// e^{½α(f,f)} on the Fourier side.
inline Functional free_functional(const BoundaryForms& F, Branch b = Branch::plus) {
  F.constant(b);
  return [F, b](const BoundaryTestFunction& f) { return f.is_zero() ? 1.0 : std::exp(0.5 * F(f, f, b)); };
}

// γ₋ ∬ |x-y|^{-2Δ₋} f g in position space, exact for Gaussian bumps:
// E|Z|^p = (2s²)^{p/2} Γ((d+p)/2)/Γ(d/2) ₁F₁(-p/2; d/2; -R²/(2s²)) for Z ~ N(R, s²I).
inline double alpha_minus_position(const BoundaryTestFunction& f, const BoundaryTestFunction& g,
                                   const SpectralParams& p) {
  if (f.is_zero() || g.is_zero()) return 0.0;
  const int d = p.d;
  require(f.dim() == d && g.dim() == d, "alpha_minus_position: dimension mismatch");
  const double pw = -2.0 * p.delta_minus;
  require(d + pw > 0.0, "alpha_minus_position: |x|^{-2Δ₋} not locally integrable");
  if (!std::isfinite(p.gamma_minus)) throw NumericalError("alpha_minus_position: γ₋ sits on a Γ pole");
  double s = 0.0;
  for (const auto& a : f.bumps)
    for (const auto& b : g.bumps) {
      double s2 = a.width * a.width + b.width * b.width, R2 = dist2(a.center, b.center);
      double mass = a.amplitude * b.amplitude * std::pow(2.0 * pi * a.width * b.width, d);
      double mom = std::pow(2.0 * s2, 0.5 * pw) * gamma_ratio(0.5 * (d + pw), 0.5 * d) *
                   hyp1f1(-0.5 * pw, 0.5 * d, -R2 / (2.0 * s2));
      s += mass * mom;
    }
  return p.gamma_minus * s;
}

inline Functional alpha_minus_functional(const SpectralParams& p) {
  return [p](const BoundaryTestFunction& f) { return std::exp(0.5 * alpha_minus_position(f, f, p)); };
}

inline Functional renormalized(const BoundaryForms& F, double lambda, QuarticConstant which = QuarticConstant::stated) {
  return [F, lambda, which](const BoundaryTestFunction& f) { return renormalized_functional(f, F, lambda, which); };
}

// ------------------------------------------------------------------ Grams

inline GramReport gram_stochastic(const Functional& fn, const std::vector<BoundaryTestFunction>& fam,
                                  double tol = 1e-10) {
  const int n = static_cast<int>(fam.size());
  require(n >= 1 && n <= 6, "gram_stochastic: family size must be 1..6");
  Eigen::MatrixXd G(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) G(j, l) = fn(fam[j] + fam[l]);
  return make_report(G, describe_all(fam), tol);
}

inline GramReport gram_reflection(const Functional& fn, const std::vector<BoundaryTestFunction>& fam,
                                  double tol = 1e-10) {
  const int n = static_cast<int>(fam.size());
  require(n >= 1 && n <= 6, "gram_reflection: family size must be 1..6");
  for (const auto& f : fam)
    require(f.min_x1() > 0.0, "gram_reflection: support of " + f.describe() + " reaches x1 <= 0");
  Eigen::MatrixXd G(n, n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) G(j, l) = fn(reflect_x1(fam[j]) + fam[l]);
  return make_report(G, describe_all(fam), tol);
}

// ------------------------------------------------------------ witness search

struct WitnessSearch {
  bool found = false;
  GramReport best;     // family with the most negative min/max eigenvalue ratio
  double best_ratio = INFINITY;
  int families_tried = 0;
};

// Exhausts k-subsets of the candidates.
inline WitnessSearch search_witness(
    const std::function<GramReport(const std::vector<BoundaryTestFunction>&)>& gram,
    const std::vector<BoundaryTestFunction>& candidates, int k) {
  const int n = static_cast<int>(candidates.size());
  require(k >= 1 && k <= n && k <= 6, "search_witness: need 1 <= k <= min(6, #candidates)");
  WitnessSearch ws;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    std::vector<BoundaryTestFunction> fam;
    for (int i : idx) fam.push_back(candidates[i]);
    GramReport r = gram(fam);
    ++ws.families_tried;
    double ratio = r.min_eigenvalue / std::max(std::abs(r.max_eigenvalue), 1e-300);
    if (ratio < ws.best_ratio) {
      ws.best_ratio = ratio;
      ws.best = r;
    }
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  ws.found = !ws.best.psd;
  return ws;
}

// ------------------------------------------------------------ unitarity scan

struct UnitarityPoint {
  double nu = 0.0;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool psd = true;
};

struct UnitarityScan {
  std::vector<UnitarityPoint> points;
  bool sign_change = false;
  double bracket_lo = nan_v, bracket_hi = nan_v;  // consecutive ν where the verdict flips
};

// Reflection Gram of the α₋ Gaussian functional along ν in dimension d.
inline UnitarityScan unitarity_scan(int d, const std::vector<double>& nus,
                                    const std::vector<BoundaryTestFunction>& fam, double tol = 1e-10) {
  UnitarityScan s;
  for (double nu : nus) {
    auto p = spectral_params(d, mass_for_nu(d, nu));
    GramReport r = gram_reflection(alpha_minus_functional(p), fam, tol);
    s.points.push_back({nu, r.min_eigenvalue, r.max_eigenvalue, r.psd});
  }
  for (std::size_t i = 1; i < s.points.size(); ++i)
    if (s.points[i].psd != s.points[i - 1].psd) {
      s.sign_change = true;
      s.bracket_lo = s.points[i - 1].nu;
      s.bracket_hi = s.points[i].nu;
      break;
    }
  return s;
}

// --------------------------------------------------- lattice RP under V_Λ

// gram[j][l] = E[e^{φ(θf_j) + φ(f_l)} e^{-V_Λ}] / E[e^{-V_Λ}]; at λ = 0 the
// exact Gaussian value is used.
inline GramReport perturbed_rp_gram(const LatticeModel& M, double lambda, const std::vector<SiteFunction>& fam,
                                    const McConfig& mc, double tol = 1e-10) {
  const int n = static_cast<int>(fam.size());
  require(n >= 1 && n <= 6, "perturbed_rp_gram: family size must be 1..6");
  require(M.spec.n_x % 2 == 0, "perturbed_rp_gram: grid must be symmetric under the x1 flip (even n_x)");
  std::vector<std::string> names;
  for (const auto& f : fam) {
    require(!f.sites.empty() && f.sites.size() == f.coef.size(), "perturbed_rp_gram: malformed site function");
    std::string s;
    for (std::size_t a = 0; a < f.sites.size(); ++a) {
      require(M.sites[f.sites[a]].x[0] > 0.0, "perturbed_rp_gram: site function must live on x1 > 0");
      s += (a ? " + " : "") + std::to_string(f.coef[a]) + "*phi[" + std::to_string(f.sites[a]) + "]";
    }
    names.push_back(s);
  }
  if (lambda == 0.0) return make_report(exact_rp_gram(M, fam), names, tol);

  std::vector<SiteFunction> th;
  for (const auto& f : fam) th.push_back(reflect(M, f));
  std::vector<double> logw(mc.n);
  std::vector<Eigen::VectorXd> U(mc.n, Eigen::VectorXd(n)), Vv(mc.n, Eigen::VectorXd(n));
  for_each_sample(M, mc, [&](int i, const Eigen::Ref<const Eigen::VectorXd>& phi) {
    logw[i] = -potential_density(phi.data(), M.weights, M.wick_diag, lambda);
    for (int j = 0; j < n; ++j) {
      U[i](j) = std::exp(evaluate(th[j], phi));
      Vv[i](j) = std::exp(evaluate(fam[j], phi));
    }
  });
  const double mx = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(mc.n);
  double W = 0.0;
  for (int i = 0; i < mc.n; ++i) W += (w[i] = std::exp(logw[i] - mx));
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < mc.n; ++i) G.noalias() += w[i] * U[i] * Vv[i].transpose();
  G /= W;
  GramReport r = make_report(G, names, tol);
  // ratio-estimator standard error of aᵀGa along the min eigenvector
  const Eigen::VectorXd& a = r.min_eigenvector;
  double wbar = W / mc.n, acc = 0.0;
  for (int i = 0; i < mc.n; ++i) {
    double q = a.dot(U[i]) * a.dot(Vv[i]);
    double dv = w[i] * (q - r.min_eigenvalue);
    acc += dv * dv;
  }
  r.stderr_min = std::sqrt(acc / mc.n) / wbar / std::sqrt(static_cast<double>(mc.n));
  r.statistical = true;
  r.threshold = 3.0 * r.stderr_min;
  r.psd = r.min_eigenvalue >= -r.threshold;
  return r;
}

}  // namespace adscft
