#include "stagenet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "stagenet/error.hpp"
#include "stagenet/kernels.hpp"

namespace stagenet {

std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

Param::Param(std::string name_, Shape shape_)
    : name(std::move(name_)),
      shape(shape_),
      data(shape_.size(), 0.0),
      grad(shape_.size(), 0.0),
      adam_m(shape_.size(), 0.0),
      adam_v(shape_.size(), 0.0) {}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

const Shape& Var::shape() const { return graph_->shape(id_); }
std::span<const double> Var::value() const { return graph_->value(id_); }
std::span<const double> Var::grad() const { return graph_->grad_view(id_); }

double Var::item() const {
  const auto v = value();
  if (v.size() != 1) {
    throw DimensionError("item() on non-scalar " + to_string(shape()));
  }
  return v[0];
}

Var Graph::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw DimensionError("constant: " + std::to_string(values.size()) +
                         " values for shape " + to_string(shape));
  }
  Node n;
  n.shape = shape;
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant_scalar(double value) { return constant({1, 1}, {value}); }

Var Graph::zeros(Shape shape) {
  return constant(shape, std::vector<double>(shape.size(), 0.0));
}

Var Graph::param(Param& p) {
  Node n;
  n.shape = p.shape;
  n.value = p.data;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Shape shape, std::vector<double> value,
                  std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.shape = shape;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [&](std::size_t p) { return nodes_[p].requires_grad; });
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<const double> Graph::grad_view(std::size_t id) const {
  return nodes_[id].grad;
}

void Graph::backward(Var root, double seed) {
  if (root.shape().size() != 1) {
    throw DimensionError("backward: root must be scalar, got " +
                         to_string(root.shape()));
  }
  if (!nodes_[root.id()].requires_grad) return;
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[root.id()] = 1;
  grad(root.id())[0] += seed;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      kernels::axpy(1.0, n.grad, n.param->grad);
      continue;
    }
    if (!n.backward) continue;
    for (std::size_t p : n.parents) reachable[p] = 1;
    n.backward(*this, i);
  }
}

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void require_vector(const char* op, Var v) {
  if (!v.shape().is_vector() || v.shape().rows == 0) {
    throw DimensionError(std::string(op) + ": expected a nonempty vector, got " +
                         to_string(v.shape()));
  }
}

template <class F>
Var unary(Var a, F&& f, Graph::BackwardFn bw) {
  const auto in = a.value();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return a.graph().record(a.shape(), std::move(out), {a.id()}, std::move(bw));
}

}  // namespace

Var matmul(Var a, Var b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.cols != sb.rows) {
    throw DimensionError("matmul: inner dimensions differ " + to_string(sa) +
                         " · " + to_string(sb));
  }
  const std::size_t m = sa.rows, k = sa.cols, n = sb.cols;
  std::vector<double> out(m * n);
  kernels::gemm(a.value(), b.value(), out, m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      {m, n}, std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
        const auto go = g.grad(self);
        if (g.requires_grad(ia)) kernels::gemm_nt_acc(go, g.value(ib), g.grad(ia), m, k, n);
        if (g.requires_grad(ib)) kernels::gemm_tn_acc(g.value(ia), go, g.grad(ib), m, k, n);
      });
}

Var transpose(Var a) {
  const Shape s = a.shape();
  const auto in = a.value();
  std::vector<double> out(s.size());
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out[c * s.rows + r] = in[r * s.cols + c];
  const std::size_t ia = a.id();
  return a.graph().record({s.cols, s.rows}, std::move(out), {ia},
                          [ia, s](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            auto ga = g.grad(ia);
                            for (std::size_t r = 0; r < s.rows; ++r)
                              for (std::size_t c = 0; c < s.cols; ++c)
                                ga[r * s.cols + c] += go[c * s.rows + r];
                          });
}

Var reshape(Var a, Shape shape) {
  if (shape.size() != a.shape().size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " +
                         to_string(shape));
  }
  const auto in = a.value();
  const std::size_t ia = a.id();
  return a.graph().record(shape, std::vector<double>(in.begin(), in.end()), {ia},
                          [ia](Graph& g, std::size_t self) {
                            kernels::axpy(1.0, g.grad(self), g.grad(ia));
                          });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  const auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(a.shape(), std::move(out), {ia, ib},
                          [ia, ib](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            if (g.requires_grad(ia)) kernels::axpy(1.0, go, g.grad(ia));
                            if (g.requires_grad(ib)) kernels::axpy(1.0, go, g.grad(ib));
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  const auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(a.shape(), std::move(out), {ia, ib},
                          [ia, ib](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            if (g.requires_grad(ia)) kernels::axpy(1.0, go, g.grad(ia));
                            if (g.requires_grad(ib)) kernels::axpy(-1.0, go, g.grad(ib));
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const auto x = a.value(), y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(a.shape(), std::move(out), {ia, ib},
                          [ia, ib](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            const auto x = g.value(ia), y = g.value(ib);
                            if (g.requires_grad(ia)) {
                              auto ga = g.grad(ia);
                              for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
                            }
                            if (g.requires_grad(ib)) {
                              auto gb = g.grad(ib);
                              for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
                            }
                          });
}

Var scale(Var a, double factor) {
  const std::size_t ia = a.id();
  return unary(a, [factor](double x) { return factor * x; },
               [ia, factor](Graph& g, std::size_t self) {
                 kernels::axpy(factor, g.grad(self), g.grad(ia));
               });
}

Var add_scalar(Var a, double offset) {
  const std::size_t ia = a.id();
  return unary(a, [offset](double x) { return x + offset; },
               [ia](Graph& g, std::size_t self) {
                 kernels::axpy(1.0, g.grad(self), g.grad(ia));
               });
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw DimensionError("add_n: no operands");
  const Shape s = terms.front().shape();
  std::vector<double> out(s.size(), 0.0);
  std::vector<std::size_t> ids;
  ids.reserve(terms.size());
  for (const Var& t : terms) {
    require_same_shape("add_n", terms.front(), t);
    const auto v = t.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    ids.push_back(t.id());
  }
  auto parents = ids;
  return terms.front().graph().record(
      s, std::move(out), std::move(parents),
      [ids = std::move(ids)](Graph& g, std::size_t self) {
        const auto go = g.grad(self);
        for (std::size_t id : ids)
          if (g.requires_grad(id)) kernels::axpy(1.0, go, g.grad(id));
      });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [ia](Graph& g, std::size_t self) {
                 const auto go = g.grad(self);
                 const auto y = g.value(self);
                 auto ga = g.grad(ia);
                 for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
               });
}

Var tanh(Var a) {
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return std::tanh(x); },
               [ia](Graph& g, std::size_t self) {
                 const auto go = g.grad(self);
                 const auto y = g.value(self);
                 auto ga = g.grad(ia);
                 for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
               });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [ia](Graph& g, std::size_t self) {
                 const auto go = g.grad(self);
                 const auto x = g.value(ia);
                 auto ga = g.grad(ia);
                 for (std::size_t i = 0; i < go.size(); ++i)
                   if (x[i] > 0.0) ga[i] += go[i];
               });
}

Var log(Var a) {
  for (double x : a.value()) {
    if (!(x > 0.0)) throw NumericError("log: non-positive argument " + std::to_string(x));
  }
  const std::size_t ia = a.id();
  return unary(a, [](double x) { return std::log(x); },
               [ia](Graph& g, std::size_t self) {
                 const auto go = g.grad(self);
                 const auto x = g.value(ia);
                 auto ga = g.grad(ia);
                 for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / x[i];
               });
}

Var clamp(Var a, double lo, double hi) {
  const std::size_t ia = a.id();
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [ia, lo, hi](Graph& g, std::size_t self) {
                 const auto go = g.grad(self);
                 const auto x = g.value(ia);
                 auto ga = g.grad(ia);
                 for (std::size_t i = 0; i < go.size(); ++i)
                   if (x[i] >= lo && x[i] <= hi) ga[i] += go[i];
               });
}

Var softmax(Var v) {
  require_vector("softmax", v);
  const auto x = v.value();
  double mx = x[0];
  for (double e : x) {
    if (std::isnan(e)) throw NumericError("softmax: NaN input");
    mx = std::max(mx, e);
  }
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& e : out) e /= total;
  const std::size_t iv = v.id();
  return v.graph().record(v.shape(), std::move(out), {iv},
                          [iv](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            const auto y = g.value(self);
                            double inner = 0.0;
                            for (std::size_t i = 0; i < y.size(); ++i) inner += go[i] * y[i];
                            auto gv = g.grad(iv);
                            for (std::size_t i = 0; i < y.size(); ++i) gv[i] += y[i] * (go[i] - inner);
                          });
}

Var cumsum(Var v, CumsumDirection direction) {
  require_vector("cumsum", v);
  const auto x = v.value();
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const bool forward = direction == CumsumDirection::kForward;
  double acc = 0.0;
  if (forward) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (acc += x[i]);
  } else {
    for (std::size_t i = n; i-- > 0;) out[i] = (acc += x[i]);
  }
  const std::size_t iv = v.id();
  return v.graph().record(v.shape(), std::move(out), {iv},
                          [iv, forward, n](Graph& g, std::size_t self) {
                            // Adjoint of a cumulative sum runs the other way.
                            const auto go = g.grad(self);
                            auto gv = g.grad(iv);
                            double acc = 0.0;
                            if (forward) {
                              for (std::size_t i = n; i-- > 0;) gv[i] += (acc += go[i]);
                            } else {
                              for (std::size_t i = 0; i < n; ++i) gv[i] += (acc += go[i]);
                            }
                          });
}

Var sum(Var v) {
  const auto x = v.value();
  double total = 0.0;
  for (double e : x) total += e;
  const std::size_t iv = v.id();
  return v.graph().record({1, 1}, {total}, {iv}, [iv](Graph& g, std::size_t self) {
    const double go = g.grad(self)[0];
    for (double& e : g.grad(iv)) e += go;
  });
}

Var mean(Var v) {
  const std::size_t n = v.shape().size();
  if (n == 0) throw DimensionError("mean: empty operand");
  const auto x = v.value();
  double total = 0.0;
  for (double e : x) total += e;
  const std::size_t iv = v.id();
  return v.graph().record({1, 1}, {total / static_cast<double>(n)}, {iv},
                          [iv, n](Graph& g, std::size_t self) {
                            const double go = g.grad(self)[0] / static_cast<double>(n);
                            for (double& e : g.grad(iv)) e += go;
                          });
}

Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<double> out;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (!p.shape().is_vector()) {
      throw DimensionError("concat: expected vectors, got " + to_string(p.shape()));
    }
    offsets.push_back(out.size());
    const auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
  }
  const std::size_t n = out.size();
  auto parents = ids;
  return parts.front().graph().record(
      {n, 1}, std::move(out), std::move(parents),
      [ids = std::move(ids), offsets = std::move(offsets)](Graph& g, std::size_t self) {
        const auto go = g.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.requires_grad(ids[k])) continue;
          auto gp = g.grad(ids[k]);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[offsets[k] + i];
        }
      });
}

Var slice(Var v, std::size_t begin, std::size_t length) {
  require_vector("slice", v);
  if (begin + length > v.shape().rows) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + length) + ") outside " +
                         to_string(v.shape()));
  }
  const auto x = v.value();
  std::vector<double> out(x.begin() + static_cast<std::ptrdiff_t>(begin),
                          x.begin() + static_cast<std::ptrdiff_t>(begin + length));
  const std::size_t iv = v.id();
  return v.graph().record({length, 1}, std::move(out), {iv},
                          [iv, begin](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            auto gv = g.grad(iv);
                            for (std::size_t i = 0; i < go.size(); ++i) gv[begin + i] += go[i];
                          });
}

Var repeat_chunks(Var v, std::size_t chunk) {
  require_vector("repeat_chunks", v);
  if (chunk == 0) throw DimensionError("repeat_chunks: chunk must be >= 1");
  const auto x = v.value();
  std::vector<double> out(x.size() * chunk);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t c = 0; c < chunk; ++c) out[i * chunk + c] = x[i];
  const std::size_t iv = v.id();
  const Shape shape{out.size(), 1};
  return v.graph().record(shape, std::move(out), {iv},
                          [iv, chunk](Graph& g, std::size_t self) {
                            const auto go = g.grad(self);
                            auto gv = g.grad(iv);
                            for (std::size_t i = 0; i < gv.size(); ++i) {
                              double acc = 0.0;
                              for (std::size_t c = 0; c < chunk; ++c) acc += go[i * chunk + c];
                              gv[i] += acc;
                            }
                          });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t width = rows.front().shape().size();
  std::vector<double> out;
  out.reserve(width * rows.size());
  std::vector<std::size_t> ids;
  for (const Var& r : rows) {
    if (!r.shape().is_vector() || r.shape().rows != width) {
      throw DimensionError("stack_rows: row " + to_string(r.shape()) +
                           " does not match width " + std::to_string(width));
    }
    const auto v = r.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(r.id());
  }
  auto parents = ids;
  return rows.front().graph().record(
      {rows.size(), width}, std::move(out), std::move(parents),
      [ids = std::move(ids), width](Graph& g, std::size_t self) {
        const auto go = g.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.requires_grad(ids[k])) continue;
          kernels::axpy(1.0, go.subspan(k * width, width), g.grad(ids[k]));
        }
      });
}

Var row_scale(Var m, Var w) {
  const Shape s = m.shape();
  if (!w.shape().is_vector() || w.shape().rows != s.rows) {
    throw DimensionError("row_scale: weights " + to_string(w.shape()) +
                         " do not match rows of " + to_string(s));
  }
  const auto x = m.value();
  const auto wv = w.value();
  std::vector<double> out(s.size());
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out[r * s.cols + c] = x[r * s.cols + c] * wv[r];
  const std::size_t im = m.id(), iw = w.id();
  return m.graph().record(
      s, std::move(out), {im, iw}, [im, iw, s](Graph& g, std::size_t self) {
        const auto go = g.grad(self);
        if (g.requires_grad(im)) {
          const auto wv = g.value(iw);
          auto gm = g.grad(im);
          for (std::size_t r = 0; r < s.rows; ++r)
            kernels::axpy(wv[r], go.subspan(r * s.cols, s.cols), gm.subspan(r * s.cols, s.cols));
        }
        if (g.requires_grad(iw)) {
          const auto x = g.value(im);
          auto gw = g.grad(iw);
          for (std::size_t r = 0; r < s.rows; ++r)
            gw[r] += kernels::dot(go.subspan(r * s.cols, s.cols), x.subspan(r * s.cols, s.cols));
        }
      });
}

}  // namespace stagenet
