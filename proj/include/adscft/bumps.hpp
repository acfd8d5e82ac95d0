#pragma once

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace adscft {

// amplitude * exp(-|x - center|^2 / (2 width^2))
struct Bump {
  Vec center;
  double width = 1.0;
  double amplitude = 1.0;
};

// Widths of Gaussian tail treated as the edge of the support.
inline constexpr double support_widths = 6.0;

struct BoundaryTestFunction {
  std::vector<Bump> bumps;

  BoundaryTestFunction() = default;
  explicit BoundaryTestFunction(std::vector<Bump> b) : bumps(std::move(b)) { validate(); }

  static BoundaryTestFunction bump(Vec center, double width, double amplitude = 1.0) {
    return BoundaryTestFunction({Bump{std::move(center), width, amplitude}});
  }

  int dim() const { return bumps.empty() ? 0 : static_cast<int>(bumps.front().center.size()); }
  bool is_zero() const {
    for (const auto& b : bumps)
      if (b.amplitude != 0.0) return false;
    return true;
  }

  void validate() const {
    require(!bumps.empty(), "test function needs at least one bump");
    for (const auto& b : bumps) {
      require(b.width > 0.0, "bump width must be positive");
      require(b.center.size() == bumps.front().center.size(), "bump dimensions differ");
      require(std::isfinite(b.amplitude), "bump amplitude must be finite");
    }
  }

  double operator()(const Vec& x) const {
    double s = 0.0;
    for (const auto& b : bumps) s += b.amplitude * std::exp(-0.5 * dist2(x, b.center) / (b.width * b.width));
    return s;
  }

  // Unitary transform (2π)^{-d/2} ∫ e^{ik·x} f(x) dx.
  std::complex<double> fourier(const Vec& k) const {
    std::complex<double> s = 0.0;
    const int d = dim();
    for (const auto& b : bumps) {
      double kc = 0.0;
      for (int i = 0; i < d; ++i) kc += k[i] * b.center[i];
      double mag = b.amplitude * std::pow(b.width, d) * std::exp(-0.5 * b.width * b.width * norm2(k));
      s += mag * std::polar(1.0, kc);
    }
    return s;
  }

  // Radius of a ball about the origin holding the effective support.
  double support_radius() const {
    double r = 0.0;
    for (const auto& b : bumps) r = std::max(r, std::sqrt(norm2(b.center)) + support_widths * b.width);
    return r;
  }

  // Smallest x1 reached by the effective support.
  double min_x1() const {
    double m = INFINITY;
    for (const auto& b : bumps) m = std::min(m, b.center[0] - support_widths * b.width);
    return m;
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < bumps.size(); ++i) {
      if (i) os << " + ";
      os << bumps[i].amplitude << "*g(c=[";
      for (std::size_t k = 0; k < bumps[i].center.size(); ++k) os << (k ? "," : "") << bumps[i].center[k];
      os << "],w=" << bumps[i].width << ")";
    }
    return os.str();
  }
};

inline BoundaryTestFunction operator+(const BoundaryTestFunction& f, const BoundaryTestFunction& g) {
  require(f.dim() == g.dim(), "test function dimensions differ");
  BoundaryTestFunction r = f;
  r.bumps.insert(r.bumps.end(), g.bumps.begin(), g.bumps.end());
  return r;
}

inline BoundaryTestFunction operator*(double s, BoundaryTestFunction f) {
  for (auto& b : f.bumps) b.amplitude *= s;
  return f;
}

// θ: x1 -> -x1
inline BoundaryTestFunction reflect_x1(BoundaryTestFunction f) {
  for (auto& b : f.bumps) b.center[0] = -b.center[0];
  return f;
}

// Push-forward as a density: f_u(x) = f(u^{-1}x) |det ∂u^{-1}/∂x|.
// Bump sums are closed under translations and dilations only.
inline BoundaryTestFunction pushforward(const ConformalMap& m, BoundaryTestFunction f) {
  const int d = f.dim();
  for (const auto& s : m.steps) {
    require(s.kind != ConformalStep::inversion, "pushforward: inversion does not preserve Gaussian bumps");
    for (auto& b : f.bumps) {
      b.center = apply_step_boundary(s, b.center);
      if (s.kind == ConformalStep::dilation) {
        b.width *= s.lambda;
        b.amplitude *= std::pow(s.lambda, -d);
      }
    }
  }
  return f;
}

// λ_u^{-1} f_u; λ_u is constant for the maps pushforward accepts.
inline BoundaryTestFunction conformal_transform(const ConformalMap& m, const BoundaryTestFunction& f,
                                                const SpectralParams& p) {
  BoundaryTestFunction g = pushforward(m, f);
  double lam = conformal_factor(m, Vec(f.dim(), 0.0), p);
  return (1.0 / lam) * g;
}

// ∫ Π_i exp(-|x-c_i|^2/(2 w_i^2)) dx over R^d.
inline double gaussian_product_integral(const std::vector<const Bump*>& bs) {
  const int d = static_cast<int>(bs.front()->center.size());
  double P = 0.0, q = 0.0;
  Vec m(d, 0.0);
  for (const Bump* b : bs) {
    double a = 1.0 / (b->width * b->width);
    P += a;
    q += a * norm2(b->center);
    for (int i = 0; i < d; ++i) m[i] += a * b->center[i];
  }
  double expo = -0.5 * (q - norm2(m) / P);
  return std::pow(2.0 * pi / P, 0.5 * d) * std::exp(expo);
}

// ∫ f^4 dx in closed form.
inline double integral_f4(const BoundaryTestFunction& f) {
  const auto& B = f.bumps;
  const std::size_t n = B.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l)
          s += B[i].amplitude * B[j].amplitude * B[k].amplitude * B[l].amplitude *
               gaussian_product_integral({&B[i], &B[j], &B[k], &B[l]});
  return s;
}

}  // namespace adscft
