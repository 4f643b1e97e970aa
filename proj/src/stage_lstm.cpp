#include "stagenet/stage_lstm.hpp"

#include <cmath>

#include "stagenet/error.hpp"

namespace stagenet {

namespace {

AffineGate make_gate(const std::string& prefix, std::size_t out, std::size_t n_in,
                     std::size_t hidden) {
  return AffineGate{Param(prefix + ".w", {out, n_in + 1}),
                    Param(prefix + ".u", {out, hidden + 1}), Param(prefix + ".b", {out, 1})};
}

void init_matrix(Param& p, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.shape.cols));
  for (double& v : p.data) v = uniform(rng, -bound, bound);
}

Var affine(const BoundGate& g, Var x_aug, Var h_aug) {
  const Var terms[] = {matmul(g.w, x_aug), matmul(g.u, h_aug), g.b};
  return add_n(terms);
}

}  // namespace

void StageCellDims::validate() const {
  if (n_features == 0) throw ConfigError("n_features must be >= 1");
  if (hidden == 0 || chunk == 0) throw ConfigError("hidden size and chunk must be >= 1");
  if (hidden % chunk != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) +
                      " is not divisible by chunk size " + std::to_string(chunk));
  }
  if (master_gates && levels() < 2) {
    throw ConfigError("hidden / chunk = " + std::to_string(levels()) +
                      " master-gate levels; at least 2 are required");
  }
}

StageCellParams::StageCellParams(const StageCellDims& d)
    : dims((d.validate(), d)),
      master_forget(make_gate("cell.master_forget", d.levels(), d.n_features, d.hidden)),
      master_input(make_gate("cell.master_input", d.levels(), d.n_features, d.hidden)),
      forget(make_gate("cell.forget", d.hidden, d.n_features, d.hidden)),
      input(make_gate("cell.input", d.hidden, d.n_features, d.hidden)),
      output(make_gate("cell.output", d.hidden, d.n_features, d.hidden)),
      candidate(make_gate("cell.candidate", d.hidden, d.n_features, d.hidden)) {}

std::vector<AffineGate*> StageCellParams::gates() {
  std::vector<AffineGate*> out;
  if (dims.master_gates) {
    out.push_back(&master_forget);
    out.push_back(&master_input);
  }
  for (AffineGate* g : {&forget, &input, &output, &candidate}) out.push_back(g);
  return out;
}

std::vector<Param*> StageCellParams::parameters() {
  std::vector<Param*> out;
  for (AffineGate* g : gates()) {
    out.push_back(&g->w);
    out.push_back(&g->u);
    out.push_back(&g->b);
  }
  return out;
}

void StageCellParams::initialize(Rng& rng) {
  for (AffineGate* g : gates()) {
    init_matrix(g->w, rng);
    init_matrix(g->u, rng);
    std::fill(g->b.data.begin(), g->b.data.end(), 0.0);
  }
}

DropconnectMasks DropconnectMasks::sample(StageCellParams& params, double drop_p, Rng& rng) {
  if (!(drop_p >= 0.0 && drop_p < 1.0)) throw ConfigError("dropconnect rate must lie in [0, 1)");
  DropconnectMasks m;
  const double keep_scale = 1.0 / (1.0 - drop_p);
  for (AffineGate* g : params.gates()) {
    std::vector<double> mask(g->u.data.size());
    for (double& v : mask) v = bernoulli(rng, drop_p) ? 0.0 : keep_scale;
    m.keep.push_back(std::move(mask));
  }
  return m;
}

BoundStageCell bind(Graph& g, StageCellParams& params, const DropconnectMasks* masks) {
  BoundStageCell cell;
  cell.dims = params.dims;
  const auto gates = params.gates();
  if (masks != nullptr && masks->keep.size() != gates.size()) {
    throw DimensionError("dropconnect masks do not match the cell's gates");
  }
  std::vector<BoundGate> bound;
  for (std::size_t k = 0; k < gates.size(); ++k) {
    AffineGate& gate = *gates[k];
    Var u = g.param(gate.u);
    if (masks != nullptr) u = mul(u, g.constant(gate.u.shape, masks->keep[k]));
    bound.push_back(BoundGate{g.param(gate.w), u, g.param(gate.b)});
  }
  std::size_t k = 0;
  if (params.dims.master_gates) {
    cell.master_forget = bound[k++];
    cell.master_input = bound[k++];
  }
  cell.forget = bound[k++];
  cell.input = bound[k++];
  cell.output = bound[k++];
  cell.candidate = bound[k++];
  return cell;
}

MasterGates master_gates_from(Var forget_dist, Var input_dist) {
  return MasterGates{cumsum(forget_dist, CumsumDirection::kForward),
                     cumsum(input_dist, CumsumDirection::kBackward), forget_dist, input_dist};
}

MasterGates master_gates(const BoundStageCell& cell, Var x_aug, Var h_aug) {
  if (!cell.master_forget || !cell.master_input) {
    throw ConfigError("master_gates: cell was built without master gates");
  }
  const Var pf = softmax(affine(*cell.master_forget, x_aug, h_aug));
  const Var pi = softmax(affine(*cell.master_input, x_aug, h_aug));
  return master_gates_from(pf, pi);
}

StageVariation stage_variation(Var master_forget) {
  const double levels = static_cast<double>(master_forget.shape().size());
  const Var s_norm = add_scalar(scale(mean(master_forget), -1.0), 1.0);
  return StageVariation{add_scalar(scale(s_norm, levels), 1.0), s_norm};
}

CellUpdate cell_update(Var master_forget, Var master_input, Var forget, Var input, Var c_prev,
                       Var candidate) {
  const Var w = mul(master_forget, master_input);
  const Var lstm = add(mul(forget, c_prev), mul(input, candidate));
  const Var terms[] = {mul(w, lstm), mul(sub(master_forget, w), c_prev),
                       mul(sub(master_input, w), candidate)};
  return CellUpdate{add_n(terms), w};
}

CellStep cell_step(const BoundStageCell& cell, Var v, double delta, Var h_prev, Var c_prev) {
  const StageCellDims& d = cell.dims;
  if (v.shape() != Shape{d.n_features, 1}) {
    throw DimensionError("cell_step: visit " + to_string(v.shape()) + " but cell expects " +
                         std::to_string(d.n_features) + " features");
  }
  if (h_prev.shape() != Shape{d.hidden, 1} || c_prev.shape() != Shape{d.hidden, 1}) {
    throw DimensionError("cell_step: state " + to_string(h_prev.shape()) + "/" +
                         to_string(c_prev.shape()) + " but hidden size is " +
                         std::to_string(d.hidden));
  }
  if (!std::isfinite(delta)) throw NumericError("cell_step: non-finite time interval");
  Graph& g = v.graph();
  const Var dt = g.constant_scalar(delta);
  const Var x_aug = concat(v, dt);
  const Var h_aug = concat(h_prev, dt);

  const Var f = sigmoid(affine(cell.forget, x_aug, h_aug));
  const Var i = sigmoid(affine(cell.input, x_aug, h_aug));
  const Var o = sigmoid(affine(cell.output, x_aug, h_aug));
  const Var c_hat = tanh(affine(cell.candidate, x_aug, h_aug));

  CellStep step;
  if (d.master_gates) {
    MasterGates mg = master_gates(cell, x_aug, h_aug);
    const CellUpdate upd = cell_update(repeat_chunks(mg.forget, d.chunk),
                                       repeat_chunks(mg.input, d.chunk), f, i, c_prev, c_hat);
    step.c = upd.c;
    step.overlap = upd.overlap;
    step.variation = stage_variation(mg.forget);
    step.gates = mg;
  } else {
    step.c = add(mul(f, c_prev), mul(i, c_hat));
    step.variation = StageVariation{g.constant_scalar(1.0), g.constant_scalar(0.0)};
  }
  step.h = mul(o, tanh(step.c));
  return step;
}

std::vector<StageCellState> unroll(StageCellParams& params, const PatientSequence& seq,
                                   double delta_scale) {
  if (seq.length() == 0) throw InputError("unroll: empty sequence");
  if (!(delta_scale > 0.0)) throw ConfigError("delta_scale must be > 0");
  Graph g;
  const BoundStageCell cell = bind(g, params);
  Var h = g.zeros({params.dims.hidden, 1});
  Var c = g.zeros({params.dims.hidden, 1});
  std::vector<StageCellState> states;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (!seq.mask.empty() && seq.mask[t] == 0) continue;
    const Var v = g.constant({seq.visits[t].size(), 1}, seq.visits[t]);
    const CellStep step = cell_step(cell, v, seq.deltas[t] / delta_scale, h, c);
    h = step.h;
    c = step.c;
    const auto hv = h.value();
    const auto cv = c.value();
    states.push_back(StageCellState{{hv.begin(), hv.end()},
                                    {cv.begin(), cv.end()},
                                    step.variation.s.item(),
                                    step.variation.s_norm.item()});
  }
  return states;
}

}  // namespace stagenet
