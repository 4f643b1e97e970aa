#include <doctest.h>

#include <cmath>

#include "stagenet/error.hpp"
#include "stagenet/stage_lstm.hpp"
#include "test_util.hpp"

using namespace stagenet;

namespace {

std::vector<double> values(Var v) { return {v.value().begin(), v.value().end()}; }

StageCellParams random_cell(std::size_t nf, std::size_t hidden, std::size_t chunk,
                            std::uint64_t seed, bool master = true) {
  StageCellParams p(StageCellDims{nf, hidden, chunk, master});
  Rng rng(seed);
  p.initialize(rng);
  for (AffineGate* gate : p.gates()) {
    for (double& b : gate->b.data) b = uniform(rng, -0.5, 0.5);
  }
  return p;
}

// Independent scalar evaluation of one step from the raw parameter arrays.
struct Reference {
  std::vector<double> h, c, ft, it;
  double s = 0.0;
};

std::vector<double> affine_ref(const AffineGate& g, const std::vector<double>& x,
                               const std::vector<double>& h) {
  const std::size_t out = g.b.shape.rows, nx = g.w.shape.cols, nh = g.u.shape.cols;
  std::vector<double> y(out);
  for (std::size_t r = 0; r < out; ++r) {
    double acc = g.b.data[r];
    for (std::size_t j = 0; j < nx; ++j) acc += g.w.data[r * nx + j] * x[j];
    for (std::size_t j = 0; j < nh; ++j) acc += g.u.data[r * nh + j] * h[j];
    y[r] = acc;
  }
  return y;
}

std::vector<double> softmax_ref(std::vector<double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double total = 0.0;
  for (double& v : z) total += (v = std::exp(v - m));
  for (double& v : z) v /= total;
  return z;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Reference reference_step(const StageCellParams& p, const std::vector<double>& v, double delta,
                         const std::vector<double>& h_prev, const std::vector<double>& c_prev) {
  const std::size_t nh = p.dims.hidden, nm = p.dims.levels(), ch = p.dims.chunk;
  std::vector<double> x = v, h = h_prev;
  x.push_back(delta);
  h.push_back(delta);
  const auto pf = softmax_ref(affine_ref(p.master_forget, x, h));
  const auto pi = softmax_ref(affine_ref(p.master_input, x, h));
  Reference r;
  r.ft.assign(nm, 0.0);
  r.it.assign(nm, 0.0);
  for (std::size_t k = 0; k < nm; ++k)
    for (std::size_t j = 0; j <= k; ++j) r.ft[k] += pf[j];
  for (std::size_t k = 0; k < nm; ++k)
    for (std::size_t j = k; j < nm; ++j) r.it[k] += pi[j];
  const auto f = affine_ref(p.forget, x, h), i = affine_ref(p.input, x, h),
             o = affine_ref(p.output, x, h), cc = affine_ref(p.candidate, x, h);
  r.c.resize(nh);
  r.h.resize(nh);
  for (std::size_t d = 0; d < nh; ++d) {
    const double mf = r.ft[d / ch], mi = r.it[d / ch], w = mf * mi;
    const double c_hat = std::tanh(cc[d]);
    r.c[d] = w * (sig(f[d]) * c_prev[d] + sig(i[d]) * c_hat) + (mf - w) * c_prev[d] +
             (mi - w) * c_hat;
    r.h[d] = sig(o[d]) * std::tanh(r.c[d]);
  }
  double mean = 0.0;
  for (double v2 : r.ft) mean += v2;
  mean /= static_cast<double>(nm);
  r.s = static_cast<double>(nm) * (1.0 - mean) + 1.0;
  return r;
}

}  // namespace

TEST_CASE("dimension validation") {
  CHECK_THROWS_AS(StageCellParams(StageCellDims{3, 8, 3}), ConfigError);
  CHECK_THROWS_AS(StageCellParams(StageCellDims{3, 8, 8}), ConfigError);  // one level
  CHECK_THROWS_AS(StageCellParams(StageCellDims{3, 8, 0}), ConfigError);
  CHECK_NOTHROW(StageCellParams(StageCellDims{3, 8, 2}));
}

TEST_CASE("worked example masks") {
  Graph g;
  const MasterGates mg = master_gates_from(g.constant({5, 1}, {0, 0, 1, 0, 0}),
                                           g.constant({5, 1}, {0, 0, 0, 1, 0}));
  CHECK(values(mg.forget) == std::vector<double>{0, 0, 1, 1, 1});
  CHECK(values(mg.input) == std::vector<double>{1, 1, 1, 1, 0});
  const Var c_prev = g.constant({5, 1}, {10, 20, 30, 40, 50});
  const Var c_hat = g.constant({5, 1}, {-1, -2, -3, -4, -5});
  const Var f = g.constant({5, 1}, {0.5, 0.5, 0.5, 0.5, 0.5});
  const Var i = g.constant({5, 1}, {0.25, 0.25, 0.25, 0.25, 0.25});
  const CellUpdate u = cell_update(mg.forget, mg.input, f, i, c_prev, c_hat);
  CHECK(values(u.overlap) == std::vector<double>{0, 0, 1, 1, 0});
  const auto c = values(u.c);
  CHECK(c[0] == -1.0);  // candidate only
  CHECK(c[1] == -2.0);
  CHECK(c[2] == 0.5 * 30 + 0.25 * -3);  // standard LSTM mix
  CHECK(c[3] == 0.5 * 40 + 0.25 * -4);
  CHECK(c[4] == 50.0);  // history only
  CHECK(stage_variation(mg.forget).s.item() == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("stage variation closed forms") {
  Graph g;
  const Var uniform_ft = cumsum(g.constant({5, 1}, {0.2, 0.2, 0.2, 0.2, 0.2}), CumsumDirection::kForward);
  CHECK(stage_variation(uniform_ft).s.item() == doctest::Approx(3.0).epsilon(1e-14));
  const Var keep_all = cumsum(g.constant({4, 1}, {1, 0, 0, 0}), CumsumDirection::kForward);
  const StageVariation sv = stage_variation(keep_all);
  CHECK(sv.s.item() == 1.0);
  CHECK(sv.s_norm.item() == 0.0);
}

TEST_CASE("zero parameters give zero state and uniform gates") {
  StageCellParams p(StageCellDims{3, 10, 2});  // 5 levels, all zero
  Graph g;
  const BoundStageCell cell = bind(g, p);
  const CellStep step = cell_step(cell, g.zeros({3, 1}), 0.0, g.zeros({10, 1}), g.zeros({10, 1}));
  for (double v : step.c.value()) CHECK(v == 0.0);
  for (double v : step.h.value()) CHECK(v == 0.0);
  CHECK(step.variation.s.item() == doctest::Approx(3.0).epsilon(1e-14));
  const auto ft = values(step.gates->forget);
  const auto it = values(step.gates->input);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(ft[k] == doctest::Approx(0.2 * (k + 1)).epsilon(1e-14));
    CHECK(it[k] == doctest::Approx(1.0 - 0.2 * k).epsilon(1e-14));
  }
}

TEST_CASE("cell step matches a scalar-loop evaluation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StageCellParams p = random_cell(4, 6, 2, seed);
    Rng rng(mix_seed(seed, 99));
    const auto v = test::random_vector(rng, 4, -2, 2);
    const auto h0 = test::random_vector(rng, 6, -0.9, 0.9);
    const auto c0 = test::random_vector(rng, 6, -2, 2);
    const double delta = uniform(rng, 0.0, 3.0);
    const Reference ref = reference_step(p, v, delta, h0, c0);
    Graph g;
    const CellStep step = cell_step(bind(g, p), g.constant({4, 1}, v), delta,
                                    g.constant({6, 1}, h0), g.constant({6, 1}, c0));
    for (std::size_t d = 0; d < 6; ++d) {
      CHECK(std::abs(step.c.value()[d] - ref.c[d]) <= 1e-12);
      CHECK(std::abs(step.h.value()[d] - ref.h[d]) <= 1e-12);
    }
    CHECK(std::abs(step.variation.s.item() - ref.s) <= 1e-12);
  }
}

TEST_CASE("gate monotonicity and ranges on random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    StageCellParams p = random_cell(5, 12, 3, seed);
    Rng rng(mix_seed(seed, 7));
    Graph g;
    const BoundStageCell cell = bind(g, p);
    Var h = g.constant({12, 1}, test::random_vector(rng, 12, -0.9, 0.9));
    Var c = g.constant({12, 1}, test::random_vector(rng, 12, -3, 3));
    const CellStep step = cell_step(cell, g.constant({5, 1}, test::random_vector(rng, 5, -3, 3)),
                                    uniform(rng, 0, 5), h, c);
    const auto ft = values(step.gates->forget), it = values(step.gates->input);
    for (std::size_t k = 1; k < ft.size(); ++k) {
      CHECK(ft[k] >= ft[k - 1]);
      CHECK(it[k] <= it[k - 1]);
    }
    CHECK(std::abs(ft.back() - 1.0) <= 1e-12);
    CHECK(std::abs(it.front() - 1.0) <= 1e-12);
    const auto w = values(*step.overlap);
    const auto ft_full = values(repeat_chunks(step.gates->forget, 3));
    const auto it_full = values(repeat_chunks(step.gates->input, 3));
    for (std::size_t d = 0; d < 12; ++d) {
      // Cumulative sums of a softmax can overshoot 1 by an ulp.
      CHECK(ft_full[d] - w[d] >= -1e-15);
      CHECK(it_full[d] - w[d] >= -1e-15);
      CHECK(std::abs(step.h.value()[d]) < 1.0);
    }
    const double s = step.variation.s.item(), sn = step.variation.s_norm.item();
    CHECK(s >= 1.0);
    CHECK(s < 5.0);
    CHECK(s == doctest::Approx(4.0 * sn + 1.0).epsilon(1e-15));
    CHECK(sn > 0.0);
    CHECK(sn < 1.0);
  }
}

TEST_CASE("all-ones master gates reduce bit-exactly to the LSTM update") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    const std::size_t nm = 4, ch = 2, nh = nm * ch;
    std::vector<double> pf(nm, 0.0), pi(nm, 0.0);
    pf.front() = 1.0;
    pi.back() = 1.0;
    const MasterGates mg = master_gates_from(g.constant({nm, 1}, pf), g.constant({nm, 1}, pi));
    const auto f = test::random_vector(rng, nh, 0, 1), i = test::random_vector(rng, nh, 0, 1);
    const auto cp = test::random_vector(rng, nh, -3, 3), cc = test::random_vector(rng, nh, -1, 1);
    const CellUpdate u =
        cell_update(repeat_chunks(mg.forget, ch), repeat_chunks(mg.input, ch),
                    g.constant({nh, 1}, f), g.constant({nh, 1}, i), g.constant({nh, 1}, cp),
                    g.constant({nh, 1}, cc));
    for (std::size_t d = 0; d < nh; ++d) CHECK(u.c.value()[d] == f[d] * cp[d] + i[d] * cc[d]);
  }
}

TEST_CASE("ablation cell is the plain LSTM") {
  StageCellParams p = random_cell(3, 6, 2, 4, false);
  CHECK(p.parameters().size() == 12);  // four gates × (W, U, b)
  Rng rng(5);
  const auto v = test::random_vector(rng, 3), h0 = test::random_vector(rng, 6),
             c0 = test::random_vector(rng, 6);
  Graph g;
  const CellStep step = cell_step(bind(g, p), g.constant({3, 1}, v), 0.5, g.constant({6, 1}, h0),
                                  g.constant({6, 1}, c0));
  std::vector<double> x = v, h = h0;
  x.push_back(0.5);
  h.push_back(0.5);
  const auto f = affine_ref(p.forget, x, h), i = affine_ref(p.input, x, h),
             cc = affine_ref(p.candidate, x, h);
  for (std::size_t d = 0; d < 6; ++d) {
    CHECK(std::abs(step.c.value()[d] - (sig(f[d]) * c0[d] + sig(i[d]) * std::tanh(cc[d]))) <= 1e-13);
  }
  CHECK(step.variation.s.item() == 1.0);
  CHECK(step.variation.s_norm.item() == 0.0);
  CHECK_FALSE(step.gates.has_value());
}

TEST_CASE("dropconnect masks scale the recurrent matrices") {
  StageCellParams p = random_cell(3, 6, 2, 8);
  Rng rng(1);
  const DropconnectMasks m = DropconnectMasks::sample(p, 0.5, rng);
  REQUIRE(m.keep.size() == p.gates().size());
  std::size_t zeros = 0, total = 0;
  for (const auto& mask : m.keep) {
    for (double v : mask) {
      CHECK((v == 0.0 || v == 2.0));
      zeros += v == 0.0;
      ++total;
    }
  }
  CHECK(zeros > total / 4);
  CHECK(zeros < 3 * total / 4);
  Graph g;
  const BoundStageCell cell = bind(g, p, &m);
  for (std::size_t j = 0; j < p.forget.u.data.size(); ++j) {
    CHECK(cell.forget.u.value()[j] == p.forget.u.data[j] * m.keep[2][j]);
  }
}

TEST_CASE("unroll composes cell steps and carries state through padding") {
  StageCellParams p = random_cell(2, 4, 2, 3);
  Rng rng(2);
  PatientSequence seq;
  seq.patient_id = "u";
  for (int t = 0; t < 4; ++t) seq.visits.push_back(test::random_vector(rng, 2));
  seq.deltas = {0.0, 1.0, 2.0, 0.0};
  seq.labels = {0, 1, 0, 0};
  seq.mask = {1, 1, 1, 0};
  const auto states = unroll(p, seq);
  REQUIRE(states.size() == 3);

  Graph g;
  const BoundStageCell cell = bind(g, p);
  Var h = g.zeros({4, 1}), c = g.zeros({4, 1});
  for (std::size_t t = 0; t < 3; ++t) {
    const CellStep step = cell_step(cell, g.constant({2, 1}, seq.visits[t]), seq.deltas[t], h, c);
    h = step.h;
    c = step.c;
    CHECK(values(h) == states[t].h);
    CHECK(values(c) == states[t].c);
    CHECK(step.variation.s.item() == states[t].s);
  }
  const auto again = unroll(p, seq);
  for (std::size_t t = 0; t < 3; ++t) CHECK(again[t].h == states[t].h);

  PatientSequence one = seq;
  one.visits.resize(1);
  one.deltas.resize(1);
  one.labels.resize(1);
  one.mask.resize(1);
  CHECK(unroll(p, one).front().h == states.front().h);

  PatientSequence empty;
  CHECK_THROWS_AS(unroll(p, empty), InputError);
}

TEST_CASE("gradients through a 4-step unroll") {
  StageCellParams p = random_cell(3, 6, 2, 17);
  Rng rng(6);
  std::vector<std::vector<double>> xs;
  for (int t = 0; t < 4; ++t) xs.push_back(test::random_vector(rng, 3, -2, 2));
  const auto r = test::random_vector(rng, 6, 0.5, 1.5);
  const Objective f = [&](Graph& g) {
    const BoundStageCell cell = bind(g, p);
    Var h = g.zeros({6, 1}), c = g.zeros({6, 1});
    std::vector<Var> terms;
    for (int t = 0; t < 4; ++t) {
      const CellStep step = cell_step(cell, g.constant({3, 1}, xs[t]), t == 0 ? 0.0 : 1.5, h, c);
      h = step.h;
      c = step.c;
      terms.push_back(step.variation.s);
    }
    terms.push_back(sum(mul(h, g.constant({6, 1}, r))));
    return add_n(terms);
  };
  const auto params = p.parameters();
  const GradCheckReport rep = grad_check(f, params, GradCheckOptions{1e-5, 1e-4});
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("non-finite interval is rejected") {
  StageCellParams p = random_cell(2, 4, 2, 1);
  Graph g;
  CHECK_THROWS_AS(cell_step(bind(g, p), g.zeros({2, 1}), NAN, g.zeros({4, 1}), g.zeros({4, 1})),
                  NumericError);
  CHECK_THROWS_AS(cell_step(bind(g, p), g.zeros({3, 1}), 0.0, g.zeros({4, 1}), g.zeros({4, 1})),
                  DimensionError);
}
