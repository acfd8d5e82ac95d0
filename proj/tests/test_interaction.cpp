#include <gtest/gtest.h>

#include <limits>
#include <numeric>
#include <random>

#include <adscft/interaction.hpp>

using namespace adscft;

namespace {

const SpectralParams P1 = spectral_params(1, 6.25);

LatticeModel tiny_model() { return build_model({0.2, 5.0, 1.0, 1, 6, 6, 6.25, 4096}); }

std::vector<double> random_field(const LatticeModel& M, std::uint64_t seed) {
  return sample_fields(M, seed, 1).front().values;
}

}  // namespace

// ---------------------------------------------------------------- potentials

TEST(Potential, ZeroFieldIsTheWickConstant) {
  auto M = tiny_model();
  FieldSample s{std::vector<double>(M.size(), 0.0)};
  double expect = 0.0;
  for (int i = 0; i < M.size(); ++i) expect += M.weights[i] * 3.0 * M.wick_diag[i] * M.wick_diag[i];
  EXPECT_NEAR(potential(s, M, 0.7), 0.7 * expect, 1e-14 * expect);
}

TEST(Potential, AdditivityOverDisjointRegions) {
  auto M = tiny_model();
  auto samples = sample_fields(M, 9, 20);
  std::vector<int> left, right, all(M.size());
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < M.size(); ++i) (M.sites[i].x[0] < 0.0 ? left : right).push_back(i);
  for (const auto& s : samples) {
    // equal up to the rounding of a reordered sum of signed terms
    double mag = 0.0;
    for (int i = 0; i < M.size(); ++i) mag += 0.3 * M.weights[i] * std::abs(wick_power(s.values[i], M.wick_diag[i], 4));
    double a = potential(s, M, 0.3, &left), b = potential(s, M, 0.3, &right), u = potential(s, M, 0.3, &all);
    EXPECT_NEAR(a + b, u, 64 * std::numeric_limits<double>::epsilon() * mag);
    EXPECT_EQ(u, potential(s, M, 0.3));
  }
  std::vector<int> none;
  EXPECT_EQ(potential(samples[0], M, 0.3, &none), 0.0);
}

TEST(Potential, LocalityLeavesOutsideSitesIrrelevant) {
  auto M = tiny_model();
  std::vector<int> region;
  for (int i = 0; i < M.size(); ++i)
    if (M.iz_of(i) >= 2 && M.iz_of(i) <= 4 && M.ix_of(i, 0) <= 3) region.push_back(i);
  FieldSample s{random_field(M, 4)};
  double v0 = potential(s, M, 0.4, &region);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int i = 0; i < M.size(); ++i)
    if (std::find(region.begin(), region.end(), i) == region.end()) s.values[i] += nd(rng);
  EXPECT_EQ(potential(s, M, 0.4, &region), v0);
}

TEST(Potential, InvariantUnderGridTranslation) {
  // shifting field, weights and Wick reference by one x-step along with the region
  auto M = tiny_model();
  auto v = random_field(M, 12);
  const int nz = M.spec.n_z;
  std::vector<int> region, moved;
  for (int i = 0; i < M.size(); ++i)
    if (M.ix_of(i, 0) <= 2) {
      region.push_back(i);
      moved.push_back(i + nz);
    }
  std::vector<double> tv(M.size()), tw(M.size()), tc(M.size());
  for (int i : region) {
    tv[i + nz] = v[i];
    tw[i + nz] = M.weights[i];
    tc[i + nz] = M.wick_diag[i];
  }
  EXPECT_EQ(potential_density(v.data(), M.weights, M.wick_diag, 0.2, &region),
            potential_density(tv.data(), tw, tc, 0.2, &moved));
  for (int i : region) EXPECT_EQ(M.weights[i], M.weights[i + nz]);
}

TEST(Potential, PointwiseLowerBound) {
  auto M = tiny_model();
  double sw = std::accumulate(M.weights.begin(), M.weights.end(), 0.0);
  double bound = -0.5 * wick_quartic_bound * M.c_kappa * M.c_kappa * sw;
  for (const auto& s : sample_fields(M, 2, 500)) EXPECT_GE(potential(s, M, 0.5), bound);
  // the bound is attained where every site sits at the quartic minimum with C = c_κ
  FieldSample m{std::vector<double>(M.size())};
  for (int i = 0; i < M.size(); ++i) m.values[i] = std::sqrt(3.0 * M.wick_diag[i]);
  EXPECT_GE(potential(m, M, 0.5), bound);
}

TEST(ShiftedPotential, ZeroShiftEqualsPotential) {
  auto M = tiny_model();
  auto f0 = 0.0 * BoundaryTestFunction::bump({0.0}, 0.3);
  for (const auto& s : sample_fields(M, 3, 10)) EXPECT_EQ(shifted_potential(s, f0, M, P1, 0.3, 1.0), potential(s, M, 0.3));
}

TEST(ShiftedPotential, ZeroFieldExpansion) {
  auto M = tiny_model();
  auto f = BoundaryTestFunction::bump({0.1}, 0.3, 2.0);
  auto h = smeared_at_sites(M, f, P1);
  const double s = 1.7;
  FieldSample zero{std::vector<double>(M.size(), 0.0)};
  double expect = 0.0;
  for (int i = 0; i < M.size(); ++i) {
    double a = s * h[i], C = M.wick_diag[i];
    expect += M.weights[i] * (a * a * a * a - 6.0 * C * a * a + 3.0 * C * C);
  }
  EXPECT_NEAR(shifted_potential(zero, f, M, P1, 0.4, s), 0.4 * expect, 1e-12 * std::abs(0.4 * expect));
}

TEST(ShiftedPotential, RoutesAgreeOnRandomSamples) {
  auto M = tiny_model();
  auto h = smeared_at_sites(M, BoundaryTestFunction::bump({-0.2}, 0.4, 3.0), P1);
  for (const auto& s : sample_fields(M, 8, 200)) {
    for (double sc : {-2.0, 0.3, 1.0, 5.0}) {
      double a = detail::shifted_direct(s.values.data(), h, M, 0.2, sc);
      auto [b, mag] = detail::shifted_binomial(s.values.data(), h, M, 0.2, sc);
      EXPECT_LE(std::abs(a - b), 1e-9 * mag);
    }
  }
}

// ------------------------------------------------------------ energy, variance

TEST(ExpectedEnergy, LinearInLambda) {
  auto f = BoundaryTestFunction::bump({0.0}, 0.5);
  double e1 = expected_energy(0.2, f, P1, 0.1, 10.0, 2.0).value;
  double e2 = expected_energy(0.2, f, P1, 0.2, 10.0, 2.0).value;
  EXPECT_EQ(e2, 2.0 * e1);
  EXPECT_THROW(expected_energy(0.2, 0.0 * f, P1, 0.1, 10.0, 2.0), ValidationError);
}

TEST(ExpectedEnergy, ScalingExponent) {
  auto f = BoundaryTestFunction::bump({0.0}, 0.5);
  std::vector<std::pair<double, double>> series;
  for (double z0 : {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125})
    series.push_back({z0, expected_energy(z0, f, P1, 0.1, 10.0, 2.0).value});
  auto fit = fit_exponent(series);
  double target = -1.0 - 4.0 * (P1.delta_plus - 1.0);
  EXPECT_NEAR(target, -9.198, 1e-3);
  EXPECT_NEAR(fit.slope / target, 1.0, 0.02) << fit.slope;
  // the tail of the series approaches the exponent more closely
  double local = std::log(series[5].second / series[4].second) / std::log(0.5);
  EXPECT_NEAR(local / target, 1.0, 0.01) << local;
}

TEST(ExpectedEnergy, LatticeCrossCheck) {
  LatticeSpec ls{0.2, 10.0, 2.0, 1, 32, 32, 6.25, 4096};
  auto M = build_model(ls);
  auto f = BoundaryTestFunction::bump({0.0}, 0.5);
  auto h = smeared_at_sites(M, f, P1);
  const double lambda = 0.1, ds = ls.ds(), hx = ls.hx();
  // the region covered by the lattice cells
  double E = expected_energy(ls.z0 * std::exp(0.5 * ds), f, P1, lambda, ls.A * std::exp(-0.5 * ds), ls.l - 0.5 * hx)
                 .value;
  double riemann = 0.0;
  for (int i = 0; i < M.size(); ++i) riemann += lambda * M.weights[i] * std::pow(h[i], 4);
  EXPECT_NEAR(riemann / E, 1.0, 0.10);

  const int n = 4000;
  double s1 = 0.0, s2 = 0.0;
  for_each_sample(M, {n, 21, 1, 256}, [&](int, const Eigen::Ref<const Eigen::VectorXd>& phi) {
    double d = shifted_potential(phi.data(), h, M, lambda, 1.0) - potential_density(phi.data(), M.weights, M.wick_diag, lambda);
    s1 += d;
    s2 += d * d;
  });
  double mean = s1 / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_LT(std::abs(mean - E), 0.10 * E + 3.0 * se) << mean << " " << se << " " << E;
}

TEST(Sigma, ZeroShiftKeepsOnlyTheQuarticTerm) {
  auto M = tiny_model();
  double s = 0.0;
  for (int i = 0; i < M.size(); ++i)
    for (int j = 0; j < M.size(); ++j) s += M.weights[i] * M.weights[j] * 24.0 * std::pow(M.covariance(i, j), 4);
  EXPECT_NEAR(sigma(M, std::vector<double>(M.size(), 0.0), 0.3), 0.3 * std::sqrt(s), 1e-12 * std::sqrt(s));
}

TEST(Sigma, MatchesMonteCarloVariance) {
  auto M = tiny_model();
  auto h = smeared_at_sites(M, BoundaryTestFunction::bump({0.0}, 0.4, 2.0), P1);
  for (const auto& hh : {std::vector<double>(M.size(), 0.0), h}) {
    const int n = 100000;
    double s1 = 0.0, s2 = 0.0;
    for_each_sample(M, {n, 33, 1, 1024}, [&](int, const Eigen::Ref<const Eigen::VectorXd>& phi) {
      double v = shifted_potential(phi.data(), hh, M, 1.0, 1.0);
      s1 += v;
      s2 += v * v;
    });
    double mean = s1 / n, var = s2 / n - mean * mean, sg = sigma(M, hh, 1.0);
    EXPECT_NEAR(var / (sg * sg), 1.0, 0.10);
  }
}

// --------------------------------------------------------- hypercontractivity

TEST(OptimalP, StationarityAndValue) {
  double p = optimal_p(std::exp(-10.0));
  EXPECT_LT(std::abs(optimal_p_residual(std::exp(-10.0), p)), 1e-10);
  EXPECT_NEAR(p, 54.589, 1e-3);
  EXPECT_NEAR(2.0 * p / (p - 1.0) + 2.0 * std::log(p - 1.0), 10.0, 1e-10);
  EXPECT_THROW(optimal_p(0.9), ValidationError);
  EXPECT_THROW(optimal_p(std::exp(-4.0) * 1.0001), ValidationError);
  EXPECT_THROW(optimal_p(0.0), ValidationError);
}

TEST(OptimalP, AsymptoticRatioApproachesOneMonotonically) {
  double prev = INFINITY;
  for (double a : {10.0, 20.0, 40.0, 80.0}) {
    double g = std::exp(-a), p = optimal_p(g);
    EXPECT_LT(std::abs(optimal_p_residual(g, p)), 1e-10);
    double dist = std::abs(p * std::exp(1.0) * std::sqrt(g) - 1.0);
    EXPECT_LT(dist, prev);
    prev = dist;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(TailEnvelope, MassCondition) {
  EXPECT_NEAR(spectral_params(1, 6.0).delta_plus, 3.0, 1e-12);
  EXPECT_NEAR(spectral_params(2, 24.0).delta_plus, 6.0, 1e-12);
  auto t = tail_and_envelope(100.0, 0.1, 0.1, 1.0, 0.1, 10.0, 2.0, P1);
  EXPECT_TRUE(t.mass_condition);
  EXPECT_FALSE(tail_and_envelope(100.0, 0.1, 0.1, 1.0, 0.1, 10.0, 2.0, spectral_params(1, 6.0)).mass_condition);
  EXPECT_NEAR(t.lower, 0.1 * 6.0 * 4.0 * (10.0 - 0.1), 1e-12);
  EXPECT_NEAR(t.log_tail, t.p * std::log(t.gamma) + 2.0 * t.p * std::log(t.p - 1.0), 1e-12);
  auto c = tail_and_envelope(1.0, 1.0, 0.1, 1.0, 0.1, 10.0, 2.0, P1);
  EXPECT_TRUE(c.chebyshev);
  EXPECT_EQ(c.p, 2.0);
}

TEST(TailEnvelope, SecondTermAgainstMass) {
  // E and σ follow their z₀ power laws with c_κ fixed; the second term is
  // e^{lower + log tail} and vanishes only above the mass threshold
  auto second = [](const SpectralParams& p, double z0) {
    double a = p.delta_plus - 1.0;
    double E = 0.1 * std::pow(z0, -1.0 - 4.0 * a), sg = 1e-4 * std::pow(z0, -1.0 - 3.0 * a);
    auto t = tail_and_envelope(E, sg, 0.1, 0.5, z0, 10.0, 2.0, p);
    return t.lower + t.log_tail;
  };
  auto heavy = spectral_params(1, 6.25), light = spectral_params(1, 1.0);
  EXPECT_FALSE(tail_and_envelope(1.0, 1e-4, 0.1, 0.5, 0.1, 10.0, 2.0, light).mass_condition);
  double ph = INFINITY, pl = -INFINITY;
  for (double z0 : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    double h = second(heavy, z0), l = second(light, z0);
    EXPECT_LT(h, ph);
    EXPECT_GT(l, pl);
    ph = h;
    pl = l;
  }
  EXPECT_LT(ph, -100.0);
  EXPECT_GT(pl, 100.0);
}

TEST(TailEnvelope, EnvelopeDecreasesOnLattices) {
  auto f = BoundaryTestFunction::bump({0.0}, 0.5, 3.0);
  double prev = INFINITY;
  for (double z0 : {0.2, 0.1, 0.05, 0.025}) {
    auto M = build_model({z0, 10.0, 2.0, 1, 32, 32, 6.25, 4096});
    double E = expected_energy(z0, f, P1, 0.1, 10.0, 2.0).value;
    auto t = tail_and_envelope(E, sigma(f, M, P1, 0.1), 0.1, M.c_kappa, z0, 10.0, 2.0, P1);
    EXPECT_LT(t.envelope, prev) << z0;
    prev = t.envelope;
  }
}

TEST(Hypercontractivity, ChebyshevAndNormRatios) {
  auto M = tiny_model();
  auto h = smeared_at_sites(M, BoundaryTestFunction::bump({0.0}, 0.4, 3.0), P1);
  const int n = 100000;
  std::vector<double> v(n);
  for_each_sample(M, {n, 44, 1, 1024}, [&](int i, const Eigen::Ref<const Eigen::VectorXd>& phi) {
    v[i] = shifted_potential(phi.data(), h, M, 1.0, 1.0);
  });
  double E = 0.0;
  for (int i = 0; i < M.size(); ++i) E += M.weights[i] * std::pow(h[i], 4);
  double gamma = 2.0 * sigma(M, h, 1.0) / E;
  ASSERT_LT(gamma, 1.0);
  double hits = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    double c = std::abs(x - E);
    hits += c >= 0.5 * E;
    m2 += c * c;
    m3 += c * c * c;
    m4 += c * c * c * c;
  }
  double prob = hits / n;
  EXPECT_LE(prob, gamma * gamma + 3.0 * std::sqrt(gamma * gamma / n));
  double n2 = std::sqrt(m2 / n);
  EXPECT_LE(std::cbrt(m3 / n) / n2, 4.0 * 1.05);
  EXPECT_LE(std::pow(m4 / n, 0.25) / n2, 9.0 * 1.05);
}

// ----------------------------------------------------------------- MC ratio

TEST(McRatio, ExactUnitCases) {
  auto M = tiny_model();
  auto f = BoundaryTestFunction::bump({0.0}, 0.4);
  McConfig mc{2000, 5, 1, 256};
  auto r0 = mc_ratio(0.0 * f, M, P1, 0.1, 1.0, mc);
  EXPECT_EQ(r0.ratio, 1.0);
  EXPECT_EQ(r0.lo, 1.0);
  EXPECT_EQ(r0.hi, 1.0);
  auto r1 = mc_ratio(f, M, P1, 0.0, 1.0, mc);
  EXPECT_EQ(r1.ratio, 1.0);
  EXPECT_EQ(r1.denominator, 1.0);
  EXPECT_THROW(mc_ratio(f, M, P1, 0.1, 1.0, {999, 5, 1, 256}), ValidationError);
}

TEST(McRatio, JensenAndInterval) {
  auto M = tiny_model();
  auto f = BoundaryTestFunction::bump({0.0}, 0.4, 2.0);
  auto r = mc_ratio(f, M, P1, 0.1, 1.0, {10000, 6, 1, 256});
  EXPECT_GE(r.denominator, 1.0 - 3.0 * r.denominator_stderr);
  EXPECT_LE(r.log_lo, r.log_ratio);
  EXPECT_GE(r.log_hi, r.log_ratio);
  EXPECT_GT(r.ratio, 0.0);
  // threads and chunking give the same estimate
  auto t = mc_ratio(f, M, P1, 0.1, 1.0, {10000, 6, 3, 100});
  EXPECT_EQ(r.log_ratio, t.log_ratio);
}
