#include "fairdemand/expr_graph.hpp"

#include <algorithm>
#include <cmath>

#include "fairdemand/error.hpp"
#include "fairdemand/kernels.hpp"

namespace fairdemand::diff {

std::string_view to_string(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::matmul: return "matmul";
    case Op::abs: return "abs";
    case Op::sqrt: return "sqrt";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::broadcast: return "broadcast";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
  }
  return "?";
}

namespace {

kernels::ConstMat cview(const Tensor& t) { return {t.values(), t.rows(), t.cols()}; }
kernels::Mat view(Tensor& t) { return {t.values(), t.rows(), t.cols()}; }

Shape reduced(Shape s, Axis axis) {
  switch (axis) {
    case Axis::all: return {1, 1};
    case Axis::rows: return {1, s.cols};
    case Axis::cols: return {s.rows, 1};
  }
  return {1, 1};
}

bool broadcastable(Shape from, Shape to) {
  return (from.rows == to.rows || from.rows == 1) && (from.cols == to.cols || from.cols == 1);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// g (shape of reduction result) spread back over `into`.
void spread(const Tensor& g, Axis axis, double weight, Tensor& into) {
  const std::size_t rows = into.rows();
  const std::size_t cols = into.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      switch (axis) {
        case Axis::all: v = g[0]; break;
        case Axis::rows: v = g[c]; break;
        case Axis::cols: v = g[r]; break;
      }
      into(r, c) += v * weight;
    }
  }
}

}  // namespace

NodeId ExprGraph::push(Node n) {
  if (nodes_.size() >= kNoNode) throw ValidationError("expression graph is full");
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return id;
}

void ExprGraph::check(NodeId id) const {
  if (id >= nodes_.size()) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "operand " + std::to_string(id) + " does not exist");
  }
}

NodeId ExprGraph::input(Shape shape, std::string name) {
  Node n;
  n.op = Op::input;
  n.shape = shape;
  n.name = std::move(name);
  const NodeId id = push(std::move(n));
  roots_.push_back(id);
  return id;
}

NodeId ExprGraph::constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.shape = value.shape();
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId ExprGraph::unary(Op op, NodeId a, Shape out) {
  check(a);
  Node n;
  n.op = op;
  n.lhs = a;
  n.shape = out;
  return push(std::move(n));
}

NodeId ExprGraph::elementwise(Op op, NodeId a, NodeId b) {
  check(a);
  check(b);
  if (nodes_[a].shape != nodes_[b].shape) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     std::string(to_string(op)) + " of " + to_string(nodes_[a].shape) + " and " +
                         to_string(nodes_[b].shape));
  }
  Node n;
  n.op = op;
  n.lhs = a;
  n.rhs = b;
  n.shape = nodes_[a].shape;
  return push(std::move(n));
}

NodeId ExprGraph::add(NodeId a, NodeId b) { return elementwise(Op::add, a, b); }
NodeId ExprGraph::sub(NodeId a, NodeId b) { return elementwise(Op::sub, a, b); }
NodeId ExprGraph::mul(NodeId a, NodeId b) { return elementwise(Op::mul, a, b); }
NodeId ExprGraph::div(NodeId a, NodeId b) { return elementwise(Op::div, a, b); }

NodeId ExprGraph::matmul(NodeId a, NodeId b) {
  check(a);
  check(b);
  const Shape sa = nodes_[a].shape;
  const Shape sb = nodes_[b].shape;
  if (sa.cols != sb.rows) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "matmul of " + to_string(sa) + " and " + to_string(sb));
  }
  Node n;
  n.op = Op::matmul;
  n.lhs = a;
  n.rhs = b;
  n.shape = {sa.rows, sb.cols};
  return push(std::move(n));
}

NodeId ExprGraph::abs(NodeId a) { return unary(Op::abs, a, shape(a)); }
NodeId ExprGraph::sigmoid(NodeId a) { return unary(Op::sigmoid, a, shape(a)); }
NodeId ExprGraph::tanh(NodeId a) { return unary(Op::tanh, a, shape(a)); }

NodeId ExprGraph::sqrt(NodeId a, double guard) {
  if (!(guard >= 0.0)) throw ValidationError("sqrt guard must be non-negative");
  const NodeId id = unary(Op::sqrt, a, shape(a));
  nodes_[id].attr = guard;
  return id;
}

NodeId ExprGraph::sum(NodeId a, Axis axis) {
  const NodeId id = unary(Op::sum, a, reduced(shape(a), axis));
  nodes_[id].axis = axis;
  return id;
}

NodeId ExprGraph::mean(NodeId a, Axis axis) {
  const NodeId id = unary(Op::mean, a, reduced(shape(a), axis));
  nodes_[id].axis = axis;
  return id;
}

NodeId ExprGraph::broadcast(NodeId a, Shape to) {
  check(a);
  if (!broadcastable(nodes_[a].shape, to)) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "cannot broadcast " + to_string(nodes_[a].shape) + " to " + to_string(to));
  }
  return unary(Op::broadcast, a, to);
}

NodeId ExprGraph::transpose(NodeId a) {
  const Shape s = shape(a);
  return unary(Op::transpose, a, {s.cols, s.rows});
}

NodeId ExprGraph::reshape(NodeId a, Shape to) {
  check(a);
  if (nodes_[a].shape.size() != to.size()) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "cannot reshape " + to_string(nodes_[a].shape) + " to " + to_string(to));
  }
  return unary(Op::reshape, a, to);
}

NodeId ExprGraph::scale(NodeId a, double factor) {
  return mul(a, broadcast(constant(factor), shape(a)));
}

NodeId ExprGraph::shift(NodeId a, double offset) {
  return add(a, broadcast(constant(offset), shape(a)));
}

NodeId ExprGraph::relu(NodeId a) { return scale(add(a, abs(a)), 0.5); }

NodeId ExprGraph::broadcast_like(NodeId a, NodeId like) {
  if (shape(a) == shape(like)) return a;
  return broadcast(a, shape(like));
}

void ExprGraph::set_output(NodeId id) {
  check(id);
  if (nodes_[id].shape != Shape{1, 1}) {
    throw GraphError(id, "output must be scalar, got " + to_string(nodes_[id].shape));
  }
  output_ = id;
}

double evaluate(ExprGraph& graph, const Bindings& bindings) {
  if (graph.output_ == kNoNode) throw ValidationError("graph has no output node");
  auto& nodes = graph.nodes_;
  graph.evaluated_ = false;
  for (NodeId id = 0; id < nodes.size(); ++id) {
    Node& n = nodes[id];
    switch (n.op) {
      case Op::input: {
        const auto it = bindings.find(id);
        if (it == bindings.end()) {
          throw GraphError(id, "input '" + n.name + "' is not bound");
        }
        if (it->second.shape() != n.shape) {
          throw GraphError(id, "input '" + n.name + "' bound with " +
                                   to_string(it->second.shape()) + ", expected " +
                                   to_string(n.shape));
        }
        n.value = it->second;
        break;
      }
      case Op::constant:
        break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div: {
        const Tensor& a = nodes[n.lhs].value;
        const Tensor& b = nodes[n.rhs].value;
        if (n.value.shape() != n.shape) n.value = Tensor(n.shape);
        auto out = n.value.values();
        const auto av = a.values();
        const auto bv = b.values();
        const std::size_t sz = out.size();
        if (n.op == Op::add) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = av[i] + bv[i];
        } else if (n.op == Op::sub) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = av[i] - bv[i];
        } else if (n.op == Op::mul) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = av[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < sz; ++i) out[i] = av[i] / bv[i];
        }
        break;
      }
      case Op::matmul: {
        if (n.value.shape() != n.shape) n.value = Tensor(n.shape);
        kernels::gemm_nn(cview(nodes[n.lhs].value), cview(nodes[n.rhs].value), view(n.value));
        break;
      }
      case Op::abs:
      case Op::sqrt:
      case Op::sigmoid:
      case Op::tanh: {
        const Tensor& a = nodes[n.lhs].value;
        if (n.value.shape() != n.shape) n.value = Tensor(n.shape);
        auto out = n.value.values();
        const auto av = a.values();
        const std::size_t sz = out.size();
        if (n.op == Op::abs) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = std::fabs(av[i]);
        } else if (n.op == Op::sqrt) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = std::sqrt(av[i] + n.attr);
        } else if (n.op == Op::sigmoid) {
          for (std::size_t i = 0; i < sz; ++i) out[i] = stable_sigmoid(av[i]);
        } else {
          for (std::size_t i = 0; i < sz; ++i) out[i] = std::tanh(av[i]);
        }
        break;
      }
      case Op::sum:
      case Op::mean: {
        const Tensor& a = nodes[n.lhs].value;
        n.value = Tensor(n.shape);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) {
            const double v = a(r, c);
            switch (n.axis) {
              case Axis::all: n.value[0] += v; break;
              case Axis::rows: n.value[c] += v; break;
              case Axis::cols: n.value[r] += v; break;
            }
          }
        }
        if (n.op == Op::mean) {
          const double count = static_cast<double>(a.size() / n.value.size());
          for (auto& v : n.value.values()) v /= count;
        }
        break;
      }
      case Op::broadcast: {
        const Tensor& a = nodes[n.lhs].value;
        if (n.value.shape() != n.shape) n.value = Tensor(n.shape);
        if (a.size() == 1) {
          n.value.fill(a[0]);
        } else if (a.shape() == n.shape) {
          n.value = a;
        } else if (a.rows() == 1) {
          const auto av = a.values();
          for (std::size_t r = 0; r < n.shape.rows; ++r)
            std::copy(av.begin(), av.end(), n.value.values().begin() + r * n.shape.cols);
        } else {
          for (std::size_t r = 0; r < n.shape.rows; ++r)
            for (std::size_t c = 0; c < n.shape.cols; ++c) n.value(r, c) = a(r, 0);
        }
        break;
      }
      case Op::transpose:
        n.value = nodes[n.lhs].value.transposed();
        break;
      case Op::reshape:
        n.value = nodes[n.lhs].value;
        n.value.reshape(n.shape);
        break;
    }
    if (!n.value.all_finite()) {
      throw NonFiniteError(id, std::string("non-finite value from ") +
                                   std::string(to_string(n.op)));
    }
  }
  graph.evaluated_ = true;
  return nodes[graph.output_].value[0];
}

GradientSet backward(ExprGraph& graph, std::span<const NodeId> wrt) {
  if (!graph.evaluated_) throw ValidationError("backward() requires a successful evaluate()");
  auto& nodes = graph.nodes_;
  std::vector<char> wanted(nodes.size(), 0);
  for (const NodeId id : wrt) {
    if (id >= nodes.size() || nodes[id].op != Op::input) {
      throw GraphError(id, "gradient requested for a node that is not an input");
    }
    wanted[id] = 1;
  }

  // A node needs a gradient buffer when some requested input feeds it.
  std::vector<char> live(nodes.size(), 0);
  for (NodeId id = 0; id < nodes.size(); ++id) {
    const Node& n = nodes[id];
    if (n.op == Op::input) {
      live[id] = wanted[id];
    } else if (n.op != Op::constant) {
      live[id] = static_cast<char>((n.lhs != kNoNode && live[n.lhs]) ||
                                   (n.rhs != kNoNode && live[n.rhs]));
    }
  }

  auto& grad = graph.grad_cache_;
  grad.resize(nodes.size());
  std::vector<char> touched(nodes.size(), 0);
  const NodeId out = graph.output_;
  if (live[out]) {
    grad[out] = Tensor::scalar(1.0);
    touched[out] = 1;
  }

  // The first contribution to a buffer overwrites it; later ones add.
  struct Slot {
    Tensor* t = nullptr;
    bool fresh = false;
    explicit operator bool() const { return t != nullptr; }
  };
  auto slot = [&](NodeId id) -> Slot {
    if (id == kNoNode || !live[id]) return {};
    const bool fresh = !touched[id];
    if (fresh) {
      if (grad[id].shape() != nodes[id].shape) grad[id] = Tensor(nodes[id].shape);
      touched[id] = 1;
    }
    return {&grad[id], fresh};
  };
  auto zeroed = [&](NodeId id) -> Tensor* {
    const Slot s = slot(id);
    if (s.fresh) s.t->fill(0.0);
    return s.t;
  };
  auto put = [](Slot s, auto&& term) {
    auto o = s.t->values();
    if (s.fresh) {
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = term(i);
    } else {
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += term(i);
    }
  };
  auto mode = [](Slot s) {
    return s.fresh ? kernels::Accumulate::overwrite : kernels::Accumulate::add;
  };

  for (NodeId id = out + 1; id-- > 0;) {
    if (!live[id] || !touched[id]) continue;
    const Node& n = nodes[id];
    const Tensor& g = grad[id];
    const auto gv = g.values();
    switch (n.op) {
      case Op::input:
      case Op::constant:
        break;
      case Op::add:
      case Op::sub: {
        if (const Slot ga = slot(n.lhs)) put(ga, [&](std::size_t i) { return gv[i]; });
        if (const Slot gb = slot(n.rhs)) {
          if (n.op == Op::add) {
            put(gb, [&](std::size_t i) { return gv[i]; });
          } else {
            put(gb, [&](std::size_t i) { return -gv[i]; });
          }
        }
        break;
      }
      case Op::mul: {
        const auto av = nodes[n.lhs].value.values();
        const auto bv = nodes[n.rhs].value.values();
        if (const Slot ga = slot(n.lhs)) put(ga, [&](std::size_t i) { return gv[i] * bv[i]; });
        if (const Slot gb = slot(n.rhs)) put(gb, [&](std::size_t i) { return gv[i] * av[i]; });
        break;
      }
      case Op::div: {
        const auto av = nodes[n.lhs].value.values();
        const auto bv = nodes[n.rhs].value.values();
        if (const Slot ga = slot(n.lhs)) put(ga, [&](std::size_t i) { return gv[i] / bv[i]; });
        if (const Slot gb = slot(n.rhs)) {
          put(gb, [&](std::size_t i) { return -(gv[i] * av[i] / (bv[i] * bv[i])); });
        }
        break;
      }
      case Op::matmul: {
        if (const Slot ga = slot(n.lhs)) {
          kernels::gemm_nt(cview(g), cview(nodes[n.rhs].value), view(*ga.t), mode(ga));
        }
        if (const Slot gb = slot(n.rhs)) {
          kernels::gemm_tn(cview(nodes[n.lhs].value), cview(g), view(*gb.t), mode(gb));
        }
        break;
      }
      case Op::abs: {
        if (const Slot ga = slot(n.lhs)) {
          const auto av = nodes[n.lhs].value.values();
          put(ga, [&](std::size_t i) {
            return av[i] > 0.0 ? gv[i] : av[i] < 0.0 ? -gv[i] : 0.0;
          });
        }
        break;
      }
      case Op::sqrt:
      case Op::sigmoid:
      case Op::tanh: {
        if (const Slot ga = slot(n.lhs)) {
          const auto yv = n.value.values();
          if (n.op == Op::sqrt) {
            put(ga, [&](std::size_t i) { return gv[i] * 0.5 / yv[i]; });
          } else if (n.op == Op::sigmoid) {
            put(ga, [&](std::size_t i) { return gv[i] * yv[i] * (1.0 - yv[i]); });
          } else {
            put(ga, [&](std::size_t i) { return gv[i] * (1.0 - yv[i] * yv[i]); });
          }
        }
        break;
      }
      case Op::sum:
      case Op::mean: {
        if (Tensor* ga = zeroed(n.lhs)) {
          const double weight =
              n.op == Op::mean ? 1.0 / static_cast<double>(ga->size() / n.value.size()) : 1.0;
          spread(g, n.axis, weight, *ga);
        }
        break;
      }
      case Op::broadcast: {
        if (Tensor* ga = zeroed(n.lhs)) {
          const bool rows1 = ga->rows() == 1;
          const bool cols1 = ga->cols() == 1;
          if (rows1 && !cols1) {
            auto o = ga->values();
            for (std::size_t r = 0; r < n.shape.rows; ++r) {
              const double* grow = gv.data() + r * n.shape.cols;
              for (std::size_t c = 0; c < n.shape.cols; ++c) o[c] += grow[c];
            }
            break;
          }
          for (std::size_t r = 0; r < n.shape.rows; ++r)
            for (std::size_t c = 0; c < n.shape.cols; ++c)
              (*ga)(rows1 ? 0 : r, cols1 ? 0 : c) += g(r, c);
        }
        break;
      }
      case Op::transpose: {
        if (Tensor* ga = zeroed(n.lhs)) {
          for (std::size_t r = 0; r < n.shape.rows; ++r)
            for (std::size_t c = 0; c < n.shape.cols; ++c) (*ga)(c, r) += g(r, c);
        }
        break;
      }
      case Op::reshape: {
        if (const Slot ga = slot(n.lhs)) put(ga, [&](std::size_t i) { return gv[i]; });
        break;
      }
    }
  }

  GradientSet result;
  for (const NodeId id : wrt) result.emplace(id, touched[id] ? grad[id] : Tensor(nodes[id].shape));
  return result;
}

GradientSet gradients(ExprGraph& graph, const Bindings& bindings, std::span<const NodeId> wrt) {
  for (const NodeId id : wrt) {
    const auto& roots = graph.roots();
    if (std::find(roots.begin(), roots.end(), id) == roots.end()) {
      throw GraphError(id, "gradient requested for a node that is not an input");
    }
  }
  evaluate(graph, bindings);
  return backward(graph, wrt);
}

}  // namespace fairdemand::diff
