#include <doctest.h>

#include <cmath>
#include <limits>

#include "stagenet/error.hpp"
#include "stagenet/optimizer.hpp"

using namespace stagenet;

namespace {

Param make(const std::string& name, std::vector<double> data, std::vector<double> grad) {
  Param p(name, {data.size(), 1});
  p.data = std::move(data);
  p.grad = std::move(grad);
  return p;
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged") {
  Param p = make("w", {1.0, -2.0, 0.5}, {0.0, 0.0, 0.0});
  Param* ps[] = {&p};
  Adam adam(AdamConfig{});
  adam.step(ps);
  CHECK(p.data == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(adam.steps() == 1);
}

TEST_CASE("first step moves each entry by about lr against its gradient") {
  Param p = make("w", {0.0, 0.0, 0.0}, {3.0, -0.01, 250.0});
  Param* ps[] = {&p};
  Adam adam(AdamConfig{0.01});
  adam.step(ps);
  CHECK(p.data[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.data[1] == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(p.data[2] == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("minimises a quadratic") {
  Param p = make("theta", {1.0}, {0.0});
  Param* ps[] = {&p};
  Adam adam(AdamConfig{0.1});
  for (int i = 0; i < 100; ++i) {
    p.grad[0] = 2.0 * p.data[0];
    adam.step(ps);
  }
  CHECK(std::abs(p.data[0]) < 1e-2);
}

TEST_CASE("non-finite gradient aborts without touching anything") {
  Param a = make("alpha", {1.0}, {0.5});
  Param b = make("beta", {2.0}, {std::numeric_limits<double>::quiet_NaN()});
  Param* ps[] = {&a, &b};
  Adam adam(AdamConfig{});
  try {
    adam.step(ps);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("beta") != std::string::npos);
  }
  CHECK(a.data[0] == 1.0);
  CHECK(b.data[0] == 2.0);
  CHECK(adam.steps() == 0);
  for (double m : a.adam_m) CHECK(m == 0.0);
  b.grad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam.step(ps), TrainingError);
}

TEST_CASE("resumed step counter keeps bias correction consistent") {
  Param a = make("w", {0.0}, {1.0});
  Param b = make("w", {0.0}, {1.0});
  Param* pa[] = {&a};
  Param* pb[] = {&b};
  Adam first(AdamConfig{0.01});
  first.step(pa);
  first.step(pa);
  Adam second(AdamConfig{0.01});
  second.step(pb);
  Adam resumed(AdamConfig{0.01}, second.steps());
  resumed.step(pb);
  CHECK(a.data == b.data);
}

TEST_CASE("global norm clipping") {
  Param a = make("a", {0, 0}, {3.0, 0.0});
  Param b = make("b", {0, 0}, {0.0, 4.0});
  Param* ps[] = {&a, &b};
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == 3.0);
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[1] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(1.0));
}
