#pragma once

#include <string>
#include <vector>

namespace gscope {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

// Numerical verification suite over the built-in fixtures. Checks 1-4 are
// fast (limit aggregation, scope distinctness, random-walk convergence,
// color refinement); 5-8 add the gradient oracle, the inference cost model,
// the propagation-power sweep and an end-to-end training run. When csv_dir
// is non-empty, convergence curves are written there for external plotting.
CheckResult check_limit_aggregation();
CheckResult check_scope_distinctness();
CheckResult check_markov_convergence(const std::string& csv_dir = "");
CheckResult check_color_refinement();
CheckResult check_gradient_oracle();
CheckResult check_cost_model();
CheckResult check_propagation_sweep(const std::string& csv_dir = "");
CheckResult check_training_end_to_end();

VerifyReport run_verification(bool include_slow = true, const std::string& csv_dir = "");

}  // namespace gscope
