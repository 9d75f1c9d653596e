#pragma once

#include "kshot/data.hpp"

#include <functional>
#include <string>
#include <vector>

namespace kshot {

/// Objective callback: returns f(x) and writes grad f(x) into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  int max_iters = 500;
  /// Stop when ||grad||_inf <= grad_tolerance.
  double grad_tolerance = 1e-6;
  int history = 10;
  /// Sufficient-decrease and curvature constants of the strong Wolfe test.
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

enum class LbfgsStatus { converged, max_iters, line_search_failed };

const char* to_string(LbfgsStatus status) noexcept;

struct LbfgsTraceEntry {
  int iteration;
  double value;
  double grad_norm;
};

struct LbfgsResult {
  Vector x;
  double value = 0;
  double grad_norm = 0;  // infinity norm at x
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::max_iters;
  /// Accepted iterates only; entry 0 is the starting point.
  std::vector<LbfgsTraceEntry> trace;

  bool converged() const noexcept { return status == LbfgsStatus::converged; }
};

/// Limited-memory BFGS (two-loop recursion) with a bracketing/zoom line search
/// enforcing the strong Wolfe conditions. Throws NumericError when the
/// objective is non-finite at the start or at an accepted step.
LbfgsResult minimize_lbfgs(const Objective& objective, Vector x0, const LbfgsOptions& options);

}  // namespace kshot
