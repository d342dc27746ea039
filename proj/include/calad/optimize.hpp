#pragma once

#include <functional>
#include <span>
#include <vector>

namespace calad {

/// Objective returning f(x) and writing grad f(x) into `grad` (same size as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;  // on the max-norm
  int history = 10;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_max_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a backtracking Armijo line search. Never returns a
/// point with a larger objective than x0.
LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, const LbfgsConfig& cfg = {});

}  // namespace calad
