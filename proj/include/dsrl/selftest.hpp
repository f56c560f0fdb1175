#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsrl {

// Built-in verification suites: manifold invariants, exp/log roundtrips,
// LSHAD exactness + monotonicity, energy-monotonicity sampling, gradient
// checks and metric oracles. The CLI selftest command and the acceptance
// suite both run these.

struct SuiteResult {
  std::string name;
  int checks = 0;
  int failures = 0;
  double worst_error = 0.0;
  std::string detail;

  bool passed() const { return failures == 0; }
};

struct SelftestOptions {
  // Fault injection for exercising the selftest itself: added to the time
  // coordinate of every exp_map result before the membership check.
  double exp_map_perturbation = 0.0;
};

std::vector<SuiteResult> run_selftests(const SelftestOptions& opts = {});

}  // namespace dsrl
