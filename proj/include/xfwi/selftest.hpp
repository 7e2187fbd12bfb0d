#pragma once

#include <string>
#include <vector>

namespace xfwi {

struct SelftestOptions {
  /// Any of selftest_suites(); empty is an error.
  std::vector<std::string> suites;
  /// Test hook: perturbs the adjoint of S so the dot suite must fail.
  bool break_adjoint = false;
};

struct SelftestCase {
  std::string suite;
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

std::vector<std::string> selftest_suites();
/// Runs the selected suites on built-in tiny grids.
std::vector<SelftestCase> run_selftest(const SelftestOptions& opts);

}  // namespace xfwi
