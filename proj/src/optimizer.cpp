#include "stagenet/optimizer.hpp"

#include <cmath>

#include "stagenet/error.hpp"

namespace stagenet {

void Adam::step(std::span<Param* const> params) {
  for (const Param* p : params) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) {
        throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = config_.beta1 * p->adam_m[i] + (1.0 - config_.beta1) * g;
      p->adam_v[i] = config_.beta2 * p->adam_v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = p->adam_m[i] / c1;
      const double v_hat = p->adam_v[i] / c2;
      p->data[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (Param* p : params)
      for (double& g : p->grad) g *= f;
  }
  return norm;
}

}  // namespace stagenet
