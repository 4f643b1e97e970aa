#pragma once

#include <cstdint>
#include <span>

#include "stagenet/autodiff.hpp"

namespace stagenet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. First and second moments live in each Param.
class Adam {
 public:
  explicit Adam(const AdamConfig& config, std::uint64_t steps = 0)
      : config_(config), steps_(steps) {}

  /// Applies one update from the accumulated Param::grad. Throws
  /// TrainingError naming the first parameter with a non-finite gradient;
  /// nothing is modified in that case.
  void step(std::span<Param* const> params);

  std::uint64_t steps() const { return steps_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

}  // namespace stagenet
