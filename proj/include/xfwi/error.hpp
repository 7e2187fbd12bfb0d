#pragma once

#include <stdexcept>
#include <string>

namespace xfwi {

/// Invalid input: bad files, inconsistent headers, invariant violations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Instability, CG breakdown, non-finite gradients.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The in-memory wavefield store ran past its byte budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xfwi
