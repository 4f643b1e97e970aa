#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stagenet/autodiff.hpp"

namespace stagenet {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol_rel = 1e-6;
};

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

/// Relative error |a - f| / max(|a|, |f|, 1e-8).
double relative_error(double analytic, double numeric);

/// Builds a fresh graph for the scalar objective on the current parameter
/// values. Must be deterministic across calls.
using Objective = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `objective` with central differences
/// (f(θ+εe) − f(θ−εe)) / 2ε for every coordinate of every parameter.
/// Parameter values are restored afterwards; their grads hold the analytic
/// gradient on return.
GradCheckReport grad_check(const Objective& objective, std::span<Param* const> params,
                           const GradCheckOptions& options = {});

}  // namespace stagenet
