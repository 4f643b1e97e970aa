#pragma once

// Define-by-run reverse-mode differentiation over dense row-major arrays.
//
// A Graph is a tape: every operation appends a node whose value is computed
// eagerly, and backward() sweeps the tape once in reverse creation order, which
// is a valid reverse topological order because parents always precede their
// children. Graphs are single-threaded and meant to live for one forward and
// one backward pass.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stagenet {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool is_vector() const { return cols == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// A learnable array that outlives graphs. Gradients from every graph that
/// references it accumulate into `grad`; `adam_m`/`adam_v` hold optimiser
/// moments.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  std::vector<double> adam_m;
  std::vector<double> adam_v;

  Param() = default;
  Param(std::string name, Shape shape);

  void zero_grad();
};

class Graph;

/// Lightweight handle to a node on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  /// Scalar accessor; the node must hold exactly one element.
  double item() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Shape shape, std::vector<double> values);
  Var constant_scalar(double value);
  Var zeros(Shape shape);
  /// Leaf bound to a Param; backward() adds this leaf's gradient to p.grad.
  Var param(Param& p);

  /// Appends a derived node. `backward` receives the node id and must add
  /// into the gradients of `parents`; it is skipped when no parent requires a
  /// gradient.
  Var record(Shape shape, std::vector<double> value,
             std::vector<std::size_t> parents, BackwardFn backward);

  /// Reverse sweep from a scalar root, seeding d(root)=seed.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
  std::span<double> mutable_value(std::size_t id) { return nodes_[id].value; }
  /// Gradient buffer of a node, allocated on first access.
  std::span<double> grad(std::size_t id);
  std::span<const double> grad_view(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class CumsumDirection { kForward, kBackward };

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Sum of any number of same-shaped operands.
Var add_n(std::span<const Var> terms);

// Nonlinearities.
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// Natural log; the argument must be positive.
Var log(Var a);
/// Clips to [lo, hi]; gradient passes only where the input is inside.
Var clamp(Var a, double lo, double hi);

// Vector operations.
Var softmax(Var v);
Var cumsum(Var v, CumsumDirection direction);
Var mean(Var v);
Var sum(Var v);
Var concat(Var a, Var b);
Var concat(std::span<const Var> parts);
Var slice(Var v, std::size_t begin, std::size_t length);
/// Repeats each entry `chunk` consecutive times: [a,b] -> [a,a,b,b] for 2.
Var repeat_chunks(Var v, std::size_t chunk);
/// Stacks n vectors of equal length L into an n×L matrix, one per row.
Var stack_rows(std::span<const Var> rows);
/// out[k][j] = m[k][j] * w[k] for an R×C matrix m and length-R vector w.
Var row_scale(Var m, Var w);

}  // namespace stagenet
