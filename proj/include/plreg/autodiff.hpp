#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "plreg/tensor.hpp"

namespace plreg {

using NodeId = std::size_t;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  // References stay valid only until the next node is pushed onto the graph.
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Append-only tape for reverse-mode differentiation.
///
/// Nodes are stored in creation order, so parents always precede children and
/// backward() can sweep the tape in reverse. A Graph is single-writer; use one
/// per thread.
class Graph {
 public:
  // Receives the gradient flowing into the node and accumulates into parents.
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Differentiable input (model parameter or checked variable).
  Var leaf(Tensor value);

  /// Records an operation result. `fn` may be empty when no parent needs a gradient.
  Var push(Tensor value, std::vector<NodeId> parents, BackwardFn fn);

  /// Gradient of a scalar root w.r.t. every ancestor. Clears previous gradients.
  void backward(Var root);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into the gradient slot of `id` (no-op for constants).
  void accumulate(NodeId id, const Tensor& g);
  Tensor& grad_slot(NodeId id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

enum class Axis {
  All,   // reduce everything to 1x1
  Rows,  // collapse the row dimension: r x c -> 1 x c
  Cols,  // collapse the column dimension: r x c -> r x 1
};

enum class ElementwiseOp { Add, Sub, Mul, ScalarMul, Log, Exp, Relu, Sigmoid };

// Linear algebra and structure.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// a (r x c) plus a broadcast row b (1 x c).
Var add_row(Var a, Var b);

// Elementwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double s);
Var add_scalar(Var a, double s);
// s - a
Var scalar_sub(double s, Var a);
Var log(Var a);
Var exp(Var a);
Var relu(Var a);
Var sigmoid(Var a);
// Pass-through gradient inside [lo, hi], zero outside.
Var clamp(Var a, double lo, double hi);
// x*log(x) with the convention 0*log(0) = 0. Requires x >= 0.
Var xlogx(Var a);

Var elementwise(ElementwiseOp op, Var a, Var b);
Var elementwise(ElementwiseOp op, Var a, double s = 0.0);

// Reductions and normalization.
Var sum(Var a, Axis axis = Axis::All);
Var mean(Var a, Axis axis = Axis::All);
// Axis::Cols normalizes each row over its columns; Axis::Rows each column over its rows.
Var softmax(Var a, Axis axis);

std::string_view to_string(ElementwiseOp op);

}  // namespace plreg
