#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace adscft {

struct PowerFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
};

// Least squares of log(value) on log(z0).
inline PowerFit fit_exponent(const std::vector<std::pair<double, double>>& series, double min_decades = 1.5) {
  require(series.size() >= 4, "fit_exponent: need at least 4 points");
  double lo = INFINITY, hi = 0.0;
  for (const auto& [z, v] : series) {
    require(z > 0.0 && v > 0.0, "fit_exponent: z0 and values must be positive");
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  require(std::log10(hi / lo) >= min_decades - 1e-12, "fit_exponent: z0 span below the required decades");
  const double n = static_cast<double>(series.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [z, v] : series) {
    mx += std::log(z);
    my += std::log(v);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [z, v] : series) {
    double dx = std::log(z) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  PowerFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (const auto& [z, v] : series) {
    double r = std::log(v) - f.intercept - f.slope * std::log(z);
    rss += r * r;
  }
  f.stderr_ = std::sqrt(rss / (n - 2.0) / sxx);
  return f;
}

}  // namespace adscft
