#include "stagenet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stagenet/error.hpp"

namespace stagenet {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

/// f at the current parameter values, with entry `i` of `p` set to `value`;
/// the entry is restored even if evaluation throws.
double evaluate(const Objective& objective, Param& p, std::size_t i, double value) {
  const double original = p.data[i];
  p.data[i] = value;
  double v = 0.0;
  try {
    Graph g;
    v = objective(g).item();
  } catch (const NumericError& e) {
    p.data[i] = original;
    throw NumericError("grad_check: objective failed while perturbing '" + p.name + "'[" +
                       std::to_string(i) + "]: " + e.what());
  }
  p.data[i] = original;
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: objective is not finite while perturbing '" + p.name + "'[" +
                       std::to_string(i) + "]");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const Objective& objective, std::span<Param* const> params,
                           const GradCheckOptions& options) {
  if (!(options.eps >= 1e-6 && options.eps <= 1e-4)) {
    throw ConfigError("grad_check: eps must lie in [1e-6, 1e-4]");
  }
  for (Param* p : params) p->zero_grad();
  {
    Graph g;
    Var root = objective(g);
    if (!std::isfinite(root.item())) throw NumericError("grad_check: objective is not finite");
    g.backward(root);
  }

  GradCheckReport report;
  for (Param* p : params) {
    ParamGradError err;
    err.name = p->name;
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double original = p->data[i];
      const double plus = evaluate(objective, *p, i, original + options.eps);
      const double minus = evaluate(objective, *p, i, original - options.eps);
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double analytic = p->grad[i];
      const double rel = relative_error(analytic, numeric);
      const double abs = std::abs(analytic - numeric);
      if (rel > err.max_rel_error) {
        err.max_rel_error = rel;
        err.worst_index = i;
      }
      err.max_abs_error = std::max(err.max_abs_error, abs);
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.max_abs_error = std::max(report.max_abs_error, err.max_abs_error);
    report.params.push_back(std::move(err));
  }
  report.pass = report.max_rel_error <= options.tol_rel;
  return report;
}

}  // namespace stagenet
