#include "stagenet/stage_conv.hpp"

#include <cmath>

#include "stagenet/error.hpp"

namespace stagenet {

namespace {

std::size_t checked_hidden(std::size_t hidden, std::size_t window, std::size_t bottleneck) {
  if (window == 0) throw ConfigError("observation window K must be >= 1");
  if (bottleneck == 0 || bottleneck >= hidden) {
    throw ConfigError("bottleneck " + std::to_string(bottleneck) +
                      " must lie in [1, hidden) with hidden = " + std::to_string(hidden));
  }
  return hidden;
}

void init_matrix(Param& p, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.shape.cols));
  for (double& v : p.data) v = uniform(rng, -bound, bound);
}

}  // namespace

StageConvParams::StageConvParams(std::size_t hidden_, std::size_t window_,
                                 std::size_t bottleneck_)
    : hidden(checked_hidden(hidden_, window_, bottleneck_)),
      window(window_),
      bottleneck(bottleneck_),
      kernels("conv.kernels", {hidden_, window_ * hidden_}),
      squeeze("conv.squeeze", {bottleneck_, hidden_}),
      excite("conv.excite", {hidden_, bottleneck_}) {}

void StageConvParams::initialize(Rng& rng) {
  init_matrix(kernels, rng);
  init_matrix(squeeze, rng);
  init_matrix(excite, rng);
}

std::vector<Param*> StageConvParams::parameters() { return {&kernels, &squeeze, &excite}; }

StageWindow::StageWindow(Graph& g, std::size_t window, std::size_t hidden)
    : graph_(&g), window_(window) {
  if (window == 0) throw ConfigError("observation window K must be >= 1");
  const Var zero_h = g.zeros({hidden, 1});
  const Var zero_s = g.zeros({1, 1});
  for (std::size_t k = 0; k < window; ++k) {
    h_.push_back(zero_h);
    s_.push_back(zero_s);
  }
}

void StageWindow::push(Var h, Var s_norm) {
  if (h.shape() != h_.back().shape()) {
    throw DimensionError("StageWindow: state " + to_string(h.shape()) + " does not match " +
                         to_string(h_.back().shape()));
  }
  h_.pop_front();
  s_.pop_front();
  h_.push_back(h);
  s_.push_back(s_norm);
}

Var StageWindow::states() const {
  const std::vector<Var> rows(h_.begin(), h_.end());
  return stack_rows(rows);
}

Var StageWindow::variations() const {
  const std::vector<Var> parts(s_.begin(), s_.end());
  return concat(parts);
}

Var stage_weights(Var variations) {
  return softmax(cumsum(variations, CumsumDirection::kForward));
}

Var stage_conv(Var states, Var weights, Var kernels) {
  const Shape hs = states.shape();
  if (kernels.shape().cols != hs.size()) {
    throw DimensionError("stage_conv: kernels " + to_string(kernels.shape()) +
                         " do not cover window " + to_string(hs));
  }
  const Var weighted = row_scale(states, weights);
  return matmul(kernels, reshape(weighted, {hs.size(), 1}));
}

Var progression_theme(Var states, Var weights) {
  const double k = static_cast<double>(states.shape().rows);
  return scale(matmul(transpose(states), weights), 1.0 / k);
}

Recalibration recalibrate(Var u, Var theme, Var excite, Var squeeze) {
  if (excite.shape().rows != u.shape().rows) {
    throw DimensionError("recalibrate: excite map " + to_string(excite.shape()) +
                         " does not produce " + to_string(u.shape()));
  }
  const Var x = sigmoid(matmul(excite, relu(matmul(squeeze, theme))));
  return Recalibration{mul(u, x), x};
}

}  // namespace stagenet
