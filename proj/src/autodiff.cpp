#include "plreg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plreg/errors.hpp"

namespace plreg {

namespace {

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw UsageError("Var is not attached to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw UsageError("operands belong to different graphs");
  return graph_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

// C = A * B
Tensor mm(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = &b.data()[p * m];
      double* crow = &c.data()[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A^T * B
Tensor mm_tn(const Tensor& a, const Tensor& b) {
  Tensor c(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < n; ++p) {
    const double* brow = &b.data()[p * m];
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      double* crow = &c.data()[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C = A * B^T
Tensor mm_nt(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data()[i * k];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b.data()[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

double stable_sigmoid(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  // keep the open interval (0,1) even where the exact value rounds to 0 or 1
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

}  // namespace

const Tensor& Var::value() const { return graph_of(*this).value(id); }
const Tensor& Var::grad() const { return graph_of(*this).grad(id); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(Tensor value, std::vector<NodeId> parents, BackwardFn fn) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [this](NodeId p) { return nodes_[p].requires_grad; });
  Node node{std::move(value), {}, std::move(parents), {}, needs};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) {
    throw UsageError("no gradient stored for node " + std::to_string(id) +
                     " (not an ancestor of the last backward root, or constant)");
  }
  return n.grad;
}

Tensor& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grad_slot(id);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

void Graph::backward(Var root) {
  if (root.graph != this) throw UsageError("backward root belongs to another graph");
  const Tensor& rv = nodes_[root.id].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw UsageError("backward requires a scalar root, got " + rv.shape_str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  // Zero-fill every ancestor so grad() is defined for all of them, even when
  // the incoming gradient happens to be identically zero.
  std::vector<char> reach(root.id + 1, 0);
  reach[root.id] = 1;
  for (NodeId i = root.id + 1; i-- > 0;) {
    if (!reach[i]) continue;
    grad_slot(i);
    for (NodeId p : nodes_[i].parents) reach[p] = 1;
  }
  nodes_[root.id].grad[0] = 1.0;
  for (NodeId i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!reach[i] || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + av.shape_str() + " x " +
                     bv.shape_str());
  }
  return g.push(mm(av, bv), {a.id, b.id}, [a, b](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a.id)) gr.accumulate(a.id, mm_nt(go, gr.value(b.id)));
    if (gr.requires_grad(b.id)) gr.accumulate(b.id, mm_tn(gr.value(a.id), go));
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  return g.push(std::move(out), {a.id}, [a](Graph& gr, const Tensor& go) {
    Tensor gi(go.cols(), go.rows());
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gi(j, i) = go(i, j);
    gr.accumulate(a.id, gi);
  });
}

Var concat_rows(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: column counts differ, " + av.shape_str() + " and " +
                     bv.shape_str());
  }
  std::vector<double> values(av.values());
  values.insert(values.end(), bv.values().begin(), bv.values().end());
  const std::size_t split = av.size();
  const std::size_t ar = av.rows(), br = bv.rows(), c = av.cols();
  return g.push(Tensor(ar + br, c, std::move(values)), {a.id, b.id},
                [a, b, split, ar, br, c](Graph& gr, const Tensor& go) {
                  auto first = go.values().begin();
                  gr.accumulate(a.id, Tensor(ar, c, std::vector<double>(first, first + split)));
                  gr.accumulate(b.id, Tensor(br, c, std::vector<double>(first + split, go.values().end())));
                });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (begin > end || end > av.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + av.shape_str());
  }
  const std::size_t c = av.cols();
  auto first = av.values().begin();
  Tensor out(end - begin, c,
             std::vector<double>(first + begin * c, first + end * c));
  const std::size_t r = av.rows();
  return g.push(std::move(out), {a.id}, [a, begin, r, c](Graph& gr, const Tensor& go) {
    Tensor gi(r, c);
    std::copy(go.values().begin(), go.values().end(), gi.data().begin() + begin * c);
    gr.accumulate(a.id, gi);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  if (begin > end || end > av.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + av.shape_str());
  }
  Tensor out(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  const std::size_t r = av.rows(), c = av.cols();
  return g.push(std::move(out), {a.id}, [a, begin, r, c](Graph& gr, const Tensor& go) {
    Tensor gi(r, c);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gi(i, j + begin) = go(i, j);
    gr.accumulate(a.id, gi);
  });
}

Var add_row(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: cannot broadcast " + bv.shape_str() + " over " + av.shape_str());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += bv[j];
  return g.push(std::move(out), {a.id, b.id}, [a, b](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id, go);
    if (gr.requires_grad(b.id)) {
      Tensor gb(1, go.cols());
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) gb[j] += go(i, j);
      gr.accumulate(b.id, gb);
    }
  });
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  return g.push(zip(a.value(), b.value(), std::plus<>()), {a.id, b.id},
                [a, b](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, go);
                  gr.accumulate(b.id, go);
                });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  return g.push(zip(a.value(), b.value(), std::minus<>()), {a.id, b.id},
                [a, b](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, go);
                  gr.accumulate(b.id, map(go, [](double v) { return -v; }));
                });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  return g.push(zip(a.value(), b.value(), std::multiplies<>()), {a.id, b.id},
                [a, b](Graph& gr, const Tensor& go) {
                  if (gr.requires_grad(a.id))
                    gr.accumulate(a.id, zip(go, gr.value(b.id), std::multiplies<>()));
                  if (gr.requires_grad(b.id))
                    gr.accumulate(b.id, zip(go, gr.value(a.id), std::multiplies<>()));
                });
}

Var scalar_mul(Var a, double s) {
  Graph& g = graph_of(a);
  return g.push(map(a.value(), [s](double v) { return s * v; }), {a.id},
                [a, s](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, map(go, [s](double v) { return s * v; }));
                });
}

Var add_scalar(Var a, double s) {
  Graph& g = graph_of(a);
  return g.push(map(a.value(), [s](double v) { return v + s; }), {a.id},
                [a](Graph& gr, const Tensor& go) { gr.accumulate(a.id, go); });
}

Var scalar_sub(double s, Var a) { return add_scalar(scalar_mul(a, -1.0), s); }

Var log(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(av[i]) + " at index " +
                        std::to_string(i) + " (row " + std::to_string(i / av.cols()) + ", col " +
                        std::to_string(i % av.cols()) + ")");
    }
  }
  return g.push(map(av, [](double v) { return std::log(v); }), {a.id},
                [a](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, zip(go, gr.value(a.id), std::divides<>()));
                });
}

Var exp(Var a) {
  Graph& g = graph_of(a);
  Tensor y = map(a.value(), [](double v) { return std::exp(v); });
  return g.push(y, {a.id}, [a, y](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id, zip(go, y, std::multiplies<>()));
  });
}

Var relu(Var a) {
  Graph& g = graph_of(a);
  return g.push(map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a.id},
                [a](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, zip(go, gr.value(a.id),
                                          [](double gv, double x) { return x > 0.0 ? gv : 0.0; }));
                });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  Tensor s = map(a.value(), stable_sigmoid);
  return g.push(s, {a.id}, [a, s](Graph& gr, const Tensor& go) {
    gr.accumulate(a.id, zip(go, s, [](double gv, double y) { return gv * y * (1.0 - y); }));
  });
}

Var clamp(Var a, double lo, double hi) {
  Graph& g = graph_of(a);
  return g.push(map(a.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); }), {a.id},
                [a, lo, hi](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, zip(go, gr.value(a.id), [lo, hi](double gv, double x) {
                                  return (x >= lo && x <= hi) ? gv : 0.0;
                                }));
                });
}

Var xlogx(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0 || std::isnan(av[i])) {
      throw DomainError("xlogx: negative input " + std::to_string(av[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return g.push(map(av, [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; }), {a.id},
                [a](Graph& gr, const Tensor& go) {
                  gr.accumulate(a.id, zip(go, gr.value(a.id), [](double gv, double x) {
                                  return x > 0.0 ? gv * (std::log(x) + 1.0) : 0.0;
                                }));
                });
}

Var elementwise(ElementwiseOp op, Var a, Var b) {
  switch (op) {
    case ElementwiseOp::Add: return add(a, b);
    case ElementwiseOp::Sub: return sub(a, b);
    case ElementwiseOp::Mul: return mul(a, b);
    default: break;
  }
  throw UsageError(std::string(to_string(op)) + " is not a binary tensor operation");
}

Var elementwise(ElementwiseOp op, Var a, double s) {
  switch (op) {
    case ElementwiseOp::Add: return add_scalar(a, s);
    case ElementwiseOp::Sub: return add_scalar(a, -s);
    case ElementwiseOp::Mul:
    case ElementwiseOp::ScalarMul: return scalar_mul(a, s);
    case ElementwiseOp::Log: return log(a);
    case ElementwiseOp::Exp: return exp(a);
    case ElementwiseOp::Relu: return relu(a);
    case ElementwiseOp::Sigmoid: return sigmoid(a);
  }
  throw UsageError("unknown elementwise op");
}

std::string_view to_string(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::Add: return "add";
    case ElementwiseOp::Sub: return "sub";
    case ElementwiseOp::Mul: return "mul";
    case ElementwiseOp::ScalarMul: return "scalar_mul";
    case ElementwiseOp::Log: return "log";
    case ElementwiseOp::Exp: return "exp";
    case ElementwiseOp::Relu: return "relu";
    case ElementwiseOp::Sigmoid: return "sigmoid";
  }
  return "?";
}

// ---------------------------------------------------------------------------

Var sum(Var a, Axis axis) {
  Graph& g = graph_of(a);
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  switch (axis) {
    case Axis::All: {
      double s = 0.0;
      for (double v : av.values()) s += v;
      return g.push(Tensor::scalar(s), {a.id}, [a, r, c](Graph& gr, const Tensor& go) {
        gr.accumulate(a.id, Tensor(r, c, go[0]));
      });
    }
    case Axis::Rows: {
      Tensor out(1, c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += av(i, j);
      return g.push(std::move(out), {a.id}, [a, r, c](Graph& gr, const Tensor& go) {
        Tensor gi(r, c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gi(i, j) = go[j];
        gr.accumulate(a.id, gi);
      });
    }
    case Axis::Cols: {
      Tensor out(r, 1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += av(i, j);
      return g.push(std::move(out), {a.id}, [a, r, c](Graph& gr, const Tensor& go) {
        Tensor gi(r, c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gi(i, j) = go[i];
        gr.accumulate(a.id, gi);
      });
    }
  }
  throw UsageError("unknown axis");
}

Var mean(Var a, Axis axis) {
  const Tensor& av = a.value();
  std::size_t n = 0;
  switch (axis) {
    case Axis::All: n = av.size(); break;
    case Axis::Rows: n = av.rows(); break;
    case Axis::Cols: n = av.cols(); break;
  }
  if (n == 0) throw ShapeError("mean over an empty axis of " + av.shape_str());
  return scalar_mul(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var softmax(Var a, Axis axis) {
  Graph& g = graph_of(a);
  if (axis == Axis::All) throw UsageError("softmax needs Axis::Rows or Axis::Cols");
  const Tensor& av = a.value();
  const bool by_row = axis == Axis::Cols;
  // a "slice" is one normalization group: a row for Cols, a column for Rows
  const std::size_t slices = by_row ? av.rows() : av.cols();
  const std::size_t len = by_row ? av.cols() : av.rows();
  auto at = [by_row](auto& t, std::size_t s, std::size_t k) -> decltype(auto) {
    return by_row ? t(s, k) : t(k, s);
  };
  Tensor out(av.rows(), av.cols());
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, at(av, s, k));
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(at(av, s, k) - mx);
      at(out, s, k) = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) at(out, s, k) /= z;
  }
  Tensor y = out;
  return g.push(std::move(out), {a.id},
                [a, y = std::move(y), slices, len, at](Graph& gr, const Tensor& go) {
                  Tensor gi(y.rows(), y.cols());
                  for (std::size_t s = 0; s < slices; ++s) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < len; ++k) dot += at(go, s, k) * at(y, s, k);
                    for (std::size_t k = 0; k < len; ++k)
                      at(gi, s, k) = at(y, s, k) * (at(go, s, k) - dot);
                  }
                  gr.accumulate(a.id, gi);
                });
}

}  // namespace plreg
