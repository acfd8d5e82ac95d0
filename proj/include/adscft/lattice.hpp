#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "geometry.hpp"
#include "params.hpp"

namespace adscft {

// Λ(z₀) = [z₀,A] × [-l,l]^d, log-uniform in z and uniform in x. Grid nodes
// sit strictly inside; the faces carry Dirichlet ghost values.
struct LatticeSpec {
  double z0 = 0.1;
  double A = 10.0;
  double l = 2.0;
  int d = 1;
  int n_z = 16;
  int n_x = 16;
  double m2 = 0.0;
  int budget = 4096;

  long sites() const {
    long n = n_z;
    for (int i = 0; i < d; ++i) n *= n_x;
    return n;
  }

  void validate() const {
    require(z0 > 0.0 && z0 < A, "lattice: need 0 < z0 < A");
    require(l > 0.0, "lattice: l must be positive");
    require(d >= 1 && d <= 2, "lattice: d must be 1 or 2");
    require(n_z >= 2 && n_x >= 2, "lattice: need n_z >= 2 and n_x >= 2");
    require(d * d + 4.0 * m2 > 0.0, "lattice: m2 must exceed -d^2/4");
    if (sites() > budget)
      throw BudgetError("lattice: " + std::to_string(sites()) + " sites exceed the budget of " +
                        std::to_string(budget));
  }

  double ds() const { return std::log(A / z0) / (n_z + 1); }
  double hx() const { return 2.0 * l / (n_x + 1); }
};

struct LatticeModel {
  LatticeSpec spec;
  std::vector<BulkPoint> sites;
  std::vector<double> weights;  // cell volume · z^{-d-1}
  Eigen::SparseMatrix<double> op;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd factor;  // lower triangular, factor · factorᵀ = covariance
  std::vector<double> wick_diag;
  double c_kappa = 0.0;
  double min_eigenvalue = 0.0;

  int size() const { return static_cast<int>(sites.size()); }

  // Layout: site index = iz + n_z * (ix_0 + n_x * ix_1).
  int index(int iz, int ix0, int ix1 = 0) const { return iz + spec.n_z * (ix0 + spec.n_x * ix1); }
  int iz_of(int i) const { return i % spec.n_z; }
  int ix_of(int i, int axis) const {
    int r = i / spec.n_z;
    return axis == 0 ? r % spec.n_x : r / spec.n_x;
  }

  // θ: x₁ -> -x₁ on site indices.
  int reflect(int i) const {
    int iz = iz_of(i), a = ix_of(i, 0), b = spec.d > 1 ? ix_of(i, 1) : 0;
    return index(iz, spec.n_x - 1 - a, b);
  }
};

// Largest eigenvalue of a symmetric positive matrix by power iteration.
inline double largest_eigenvalue(const Eigen::SparseMatrix<double>& A, int max_iter = 20000) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.rows());
  for (int i = 0; i < v.size(); ++i) v(i) += 0.5 * std::sin(1.0 + i);  // break symmetry
  v.normalize();
  double lam = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = A * v;
    double next = v.dot(w);
    v = w.normalized();
    if (std::abs(next - lam) <= 1e-12 * std::abs(next)) return next;
    lam = next;
  }
  return lam;
}

// Quadratic form ∫ (|∇φ|²_g + m² φ²) d_g x in s = log z:
//   z^{-d} (∂_s φ)² + z^{2-d} |∇_x φ|² + m² z^{-d} φ², over ds dx.
// Edges carry the conductances; ghost neighbours contribute only to the diagonal.
inline LatticeModel build_model(const LatticeSpec& spec) {
  spec.validate();
  LatticeModel M;
  M.spec = spec;
  const int d = spec.d, nz = spec.n_z, nx = spec.n_x, ny = d > 1 ? nx : 1;
  const double ds = spec.ds(), h = spec.hx(), s0 = std::log(spec.z0);
  const double hd = std::pow(h, d);
  const int N = static_cast<int>(spec.sites());
  M.sites.resize(N);
  M.weights.resize(N);
  auto s_at = [&](double i) { return s0 + (i + 1.0) * ds; };
  for (int b = 0; b < ny; ++b)
    for (int a = 0; a < nx; ++a)
      for (int iz = 0; iz < nz; ++iz) {
        int i = M.index(iz, a, b);
        double z = std::exp(s_at(iz));
        Vec x{-spec.l + (a + 1) * h};
        if (d > 1) x.push_back(-spec.l + (b + 1) * h);
        M.sites[i] = {z, x};
        M.weights[i] = ds * hd * std::pow(z, -d);
      }

  std::vector<Eigen::Triplet<double>> T;
  T.reserve(static_cast<std::size_t>(N) * (2 * d + 3));
  std::vector<double> diag(N, 0.0);
  auto edge = [&](int i, int j, double c) {
    diag[i] += c;
    if (j >= 0) {
      diag[j] += c;
      T.emplace_back(i, j, -c);
      T.emplace_back(j, i, -c);
    }
  };
  for (int b = 0; b < ny; ++b)
    for (int a = 0; a < nx; ++a)
      for (int iz = 0; iz < nz; ++iz) {
        int i = M.index(iz, a, b);
        double s = s_at(iz), z = std::exp(s);
        // z-edges to the layer below; the bottom layer also couples to the z₀ ghost
        edge(i, iz > 0 ? M.index(iz - 1, a, b) : -1, hd * std::exp(-d * (s - 0.5 * ds)) / ds);
        if (iz == nz - 1) edge(i, -1, hd * std::exp(-d * (s + 0.5 * ds)) / ds);
        double cx = ds * std::pow(h, d - 2) * std::pow(z, 2 - d);
        edge(i, a > 0 ? M.index(iz, a - 1, b) : -1, cx);
        if (a == nx - 1) edge(i, -1, cx);
        if (d > 1) {
          edge(i, b > 0 ? M.index(iz, a, b - 1) : -1, cx);
          if (b == ny - 1) edge(i, -1, cx);
        }
        diag[i] += spec.m2 * ds * hd * std::pow(z, -d);
      }
  for (int i = 0; i < N; ++i) T.emplace_back(i, i, diag[i]);
  M.op.resize(N, N);
  M.op.setFromTriplets(T.begin(), T.end());

  Eigen::MatrixXd dense = Eigen::MatrixXd(M.op);
  Eigen::LLT<Eigen::MatrixXd> llt_op(dense);
  if (llt_op.info() != Eigen::Success)
    throw NumericalError("build_model: operator is not positive definite (assembly bug or m2 too negative)");
  M.covariance = llt_op.solve(Eigen::MatrixXd::Identity(N, N));
  M.covariance = 0.5 * (M.covariance + M.covariance.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(M.covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("build_model: covariance factorization failed");
  M.factor = llt.matrixL();
  M.wick_diag.resize(N);
  for (int i = 0; i < N; ++i) M.wick_diag[i] = M.covariance(i, i);
  M.c_kappa = M.covariance.cwiseAbs().maxCoeff();
  M.min_eigenvalue = 1.0 / largest_eigenvalue(M.op);
  return M;
}

// ------------------------------------------------------------------ sampling

struct FieldSample {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

// Independent normal stream per (seed, index).
inline std::mt19937_64 sample_engine(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(sq);
}

// Columns are samples first .. first+count-1.
inline Eigen::MatrixXd sample_block(const LatticeModel& M, std::uint64_t seed, std::uint64_t first, int count) {
  const int N = M.size();
  Eigen::MatrixXd Z(N, count);
  for (int c = 0; c < count; ++c) {
    auto eng = sample_engine(seed, first + c);
    std::normal_distribution<double> nd;
    for (int i = 0; i < N; ++i) Z(i, c) = nd(eng);
  }
  return M.factor.triangularView<Eigen::Lower>() * Z;
}

inline std::vector<FieldSample> sample_fields(const LatticeModel& M, std::uint64_t seed, int n) {
  require(n >= 1, "sample_fields: n must be positive");
  std::vector<FieldSample> out;
  out.reserve(n);
  const int chunk = 256;
  for (int first = 0; first < n; first += chunk) {
    int cnt = std::min(chunk, n - first);
    Eigen::MatrixXd B = sample_block(M, seed, first, cnt);
    for (int c = 0; c < cnt; ++c) {
      FieldSample s;
      s.values.assign(B.col(c).data(), B.col(c).data() + B.rows());
      s.seed = seed;
      s.index = static_cast<std::uint64_t>(first + c);
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct McConfig {
  int n = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  int chunk = 256;
};

// Calls fn(index, field) for every sample. Chunks go to worker threads; each
// sample depends only on (seed, index), so results are independent of threading.
template <class Fn>
void for_each_sample(const LatticeModel& M, const McConfig& mc, Fn&& fn) {
  require(mc.n >= 1 && mc.chunk >= 1, "Monte Carlo: n and chunk must be positive");
  const int n_chunks = (mc.n + mc.chunk - 1) / mc.chunk;
  auto run = [&](int worker, int workers) {
    for (int c = worker; c < n_chunks; c += workers) {
      int first = c * mc.chunk, cnt = std::min(mc.chunk, mc.n - first);
      Eigen::MatrixXd B = sample_block(M, mc.seed, first, cnt);
      for (int k = 0; k < cnt; ++k) fn(first + k, B.col(k));
    }
  };
  int workers = std::max(1, std::min(mc.threads, n_chunks));
  if (workers == 1) {
    run(0, 1);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------- Wick powers

// :v^n: with respect to variance C (Hermite polynomials), n ≤ 4.
inline double wick_power(double v, double C, int n) {
  switch (n) {
    case 0: return 1.0;
    case 1: return v;
    case 2: return v * v - C;
    case 3: return v * (v * v - 3.0 * C);
    case 4: {
      double v2 = v * v;
      return v2 * v2 - 6.0 * C * v2 + 3.0 * C * C;
    }
    default: throw ValidationError("wick_power: order must be in 0..4");
  }
}

// min_v :v⁴: = -6C², attained at v² = 3C
inline constexpr double wick_quartic_bound = 6.0;

// ------------------------------------------------------- reflection positivity

// Sites with x₁ > 0. Requires an even n_x so that no site sits on x₁ = 0.
inline std::vector<int> positive_half(const LatticeModel& M) {
  require(M.spec.n_x % 2 == 0, "reflection: n_x must be even");
  std::vector<int> out;
  for (int i = 0; i < M.size(); ++i)
    if (M.sites[i].x[0] > 0.0) out.push_back(i);
  return out;
}

// A bulk test function: coefficients on a few sites, φ(f) = Σ c_i φ(site_i).
struct SiteFunction {
  std::vector<int> sites;
  std::vector<double> coef;
};

inline SiteFunction reflect(const LatticeModel& M, SiteFunction f) {
  for (int& i : f.sites) i = M.reflect(i);
  return f;
}

inline double pair_covariance(const LatticeModel& M, const SiteFunction& f, const SiteFunction& g) {
  double s = 0.0;
  for (std::size_t a = 0; a < f.sites.size(); ++a)
    for (std::size_t b = 0; b < g.sites.size(); ++b) s += f.coef[a] * g.coef[b] * M.covariance(f.sites[a], g.sites[b]);
  return s;
}

inline double evaluate(const SiteFunction& f, const Eigen::Ref<const Eigen::VectorXd>& phi) {
  double s = 0.0;
  for (std::size_t a = 0; a < f.sites.size(); ++a) s += f.coef[a] * phi(f.sites[a]);
  return s;
}

// ⟨Θ(e^{φ(f_j)}) e^{φ(f_l)}⟩ = exp(½ Var(φ(θf_j) + φ(f_l))), exactly.
inline Eigen::MatrixXd exact_rp_gram(const LatticeModel& M, const std::vector<SiteFunction>& fam) {
  const int n = static_cast<int>(fam.size());
  Eigen::MatrixXd G(n, n);
  std::vector<SiteFunction> th;
  for (const auto& f : fam) th.push_back(reflect(M, f));
  for (int j = 0; j < n; ++j)
    for (int l = j; l < n; ++l) {
      double v = pair_covariance(M, th[j], th[j]) + pair_covariance(M, fam[l], fam[l]) +
                 2.0 * pair_covariance(M, th[j], fam[l]);
      G(j, l) = G(l, j) = std::exp(0.5 * v);
    }
  return G;
}

}  // namespace adscft
