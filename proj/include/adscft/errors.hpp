#pragma once

#include <stdexcept>
#include <string>

namespace adscft {

// Bad input: violated precondition, invalid config value.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A quadrature, series or factorization did not reach its target.
struct NumericalError : std::runtime_error {
  double estimate = 0.0;  // achieved error estimate, when one exists
  NumericalError(const std::string& what, double est = 0.0)
      : std::runtime_error(what), estimate(est) {}
};

// Site or sample budget exceeded.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace adscft
