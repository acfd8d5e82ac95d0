#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "errors.hpp"
#include "params.hpp"

namespace adscft {

using Vec = std::vector<double>;

struct BulkPoint {
  double z = 1.0;
  Vec x;
};

inline double norm2(const Vec& x) {
  return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

inline double dist2(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// u = ((z-z')^2 + |x-x'|^2) / (2 z z')
inline double chordal_u(const BulkPoint& p, const BulkPoint& q) {
  require(p.z > 0.0 && q.z > 0.0, "chordal_u: z must be positive");
  double dz = p.z - q.z;
  return (dz * dz + dist2(p.x, q.x)) / (2.0 * p.z * q.z);
}

inline double volume_weight(double z, int d) {
  require(z > 0.0, "volume_weight: z must be positive");
  return std::pow(z, -d - 1.0);
}

struct ConformalStep {
  enum Kind { translation, dilation, inversion } kind = translation;
  Vec a;             // translation vector
  double lambda = 1; // dilation scale
};

// Steps are applied in order: steps[0] first.
struct ConformalMap {
  std::vector<ConformalStep> steps;

  static ConformalMap translate(Vec a) { return {{{ConformalStep::translation, std::move(a), 1.0}}}; }
  static ConformalMap dilate(double lambda) {
    require(lambda > 0.0, "dilation scale must be positive");
    return {{{ConformalStep::dilation, {}, lambda}}};
  }
  static ConformalMap invert() { return {{{ConformalStep::inversion, {}, 1.0}}}; }

  ConformalMap inverse() const {
    ConformalMap r;
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
      ConformalStep s = *it;
      if (s.kind == ConformalStep::translation)
        for (double& v : s.a) v = -v;
      else if (s.kind == ConformalStep::dilation)
        s.lambda = 1.0 / s.lambda;
      r.steps.push_back(s);
    }
    return r;
  }
};

// (u ∘ v)(p) = u(v(p))
inline ConformalMap compose(const ConformalMap& u, const ConformalMap& v) {
  ConformalMap r = v;
  r.steps.insert(r.steps.end(), u.steps.begin(), u.steps.end());
  return r;
}

inline BulkPoint apply_step(const ConformalStep& s, BulkPoint p) {
  require(p.z > 0.0, "apply_map_bulk: z must be positive");
  switch (s.kind) {
    case ConformalStep::translation:
      require(s.a.size() == p.x.size(), "translation dimension mismatch");
      for (std::size_t i = 0; i < p.x.size(); ++i) p.x[i] += s.a[i];
      break;
    case ConformalStep::dilation:
      require(s.lambda > 0.0, "dilation scale must be positive");
      p.z *= s.lambda;
      for (double& v : p.x) v *= s.lambda;
      break;
    case ConformalStep::inversion: {
      double r2 = p.z * p.z + norm2(p.x);
      p.z /= r2;
      for (double& v : p.x) v /= r2;
      break;
    }
  }
  return p;
}

inline BulkPoint apply_map_bulk(const ConformalMap& m, BulkPoint p) {
  for (const auto& s : m.steps) p = apply_step(s, std::move(p));
  return p;
}

inline Vec apply_step_boundary(const ConformalStep& s, Vec x) {
  switch (s.kind) {
    case ConformalStep::translation:
      require(s.a.size() == x.size(), "translation dimension mismatch");
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += s.a[i];
      break;
    case ConformalStep::dilation:
      for (double& v : x) v *= s.lambda;
      break;
    case ConformalStep::inversion: {
      double r2 = norm2(x);
      if (r2 == 0.0) throw ValidationError("apply_map_boundary: inversion pole at x = 0");
      for (double& v : x) v /= r2;
      break;
    }
  }
  return x;
}

inline Vec apply_map_boundary(const ConformalMap& m, Vec x) {
  for (const auto& s : m.steps) x = apply_step_boundary(s, std::move(x));
  return x;
}

// |det ∂m(x)/∂x| by the chain rule along the composition list.
inline double jacobian_det_abs(const ConformalMap& m, Vec x) {
  double det = 1.0;
  const double d = static_cast<double>(x.size());
  for (const auto& s : m.steps) {
    if (s.kind == ConformalStep::dilation) det *= std::pow(s.lambda, d);
    if (s.kind == ConformalStep::inversion) {
      double r2 = norm2(x);
      if (r2 == 0.0) throw ValidationError("conformal_factor: singular Jacobian at the inversion pole");
      det *= std::pow(r2, -d);
    }
    x = apply_step_boundary(s, std::move(x));
  }
  return det;
}

// λ_u(x) = |det ∂u(x)/∂x|^{-Δ₊/d}
inline double conformal_factor(const ConformalMap& m, const Vec& x, const SpectralParams& p) {
  require(static_cast<int>(x.size()) == p.d, "conformal_factor: dimension mismatch");
  return std::pow(jacobian_det_abs(m, x), -p.delta_plus / p.d);
}

}  // namespace adscft
