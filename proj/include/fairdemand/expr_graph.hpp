#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fairdemand/tensor.hpp"

namespace fairdemand::diff {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

// Guard added under every square root so d/du sqrt(u) stays finite at u = 0.
inline constexpr double kSqrtGuard = 1e-12;

enum class Op : std::uint8_t {
  input,
  constant,
  add,
  sub,
  mul,
  div,
  matmul,
  abs,
  sqrt,
  sum,
  mean,
  broadcast,
  transpose,
  reshape,
  sigmoid,
  tanh,
};

std::string_view to_string(Op op);

// Reduction direction for sum/mean:
//   all  -> 1x1
//   rows -> 1xC (collapses the row index)
//   cols -> Rx1 (collapses the column index)
enum class Axis : std::uint8_t { all, rows, cols };

struct Node {
  Op op = Op::constant;
  NodeId lhs = kNoNode;
  NodeId rhs = kNoNode;
  Shape shape{};
  Axis axis = Axis::all;
  double attr = 0.0;  // sqrt guard
  Tensor value;       // cached forward value
  std::string name;
};

// A recorded expression. Nodes are appended in topological order by the
// builder methods below; shapes are checked when a node is added. The same
// graph can be replayed with different bindings for its input nodes.
//
// Not safe to share between threads while evaluating; independent graphs
// carry no shared state.
class ExprGraph {
 public:
  NodeId input(Shape shape, std::string name = {});
  NodeId constant(Tensor value);
  NodeId constant(double value) { return constant(Tensor::scalar(value)); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId abs(NodeId a);
  NodeId sqrt(NodeId a, double guard = kSqrtGuard);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sum(NodeId a, Axis axis = Axis::all);
  NodeId mean(NodeId a, Axis axis = Axis::all);
  NodeId broadcast(NodeId a, Shape to);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, Shape to);

  // Compositions of the primitive set.
  NodeId scale(NodeId a, double factor);
  NodeId shift(NodeId a, double offset);
  NodeId square(NodeId a) { return mul(a, a); }
  NodeId relu(NodeId a);  // (a + |a|) / 2
  // Broadcasts a 1x1 / 1xC / Rx1 operand to match `like`.
  NodeId broadcast_like(NodeId a, NodeId like);

  void set_output(NodeId id);
  NodeId output() const { return output_; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  Shape shape(NodeId id) const { return nodes_.at(id).shape; }
  const std::vector<NodeId>& roots() const { return roots_; }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

 private:
  friend double evaluate(ExprGraph& graph, const std::unordered_map<NodeId, Tensor>& bindings);
  friend std::map<NodeId, Tensor> backward(ExprGraph& graph, std::span<const NodeId> wrt);

  NodeId push(Node n);
  NodeId unary(Op op, NodeId a, Shape out);
  NodeId elementwise(Op op, NodeId a, NodeId b);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> roots_;
  NodeId output_ = kNoNode;
  bool evaluated_ = false;
  std::vector<Tensor> grad_cache_;
};

using Bindings = std::unordered_map<NodeId, Tensor>;
using GradientSet = std::map<NodeId, Tensor>;

// Forward pass. Every root must be bound with a tensor of its declared
// shape. Intermediates are cached on the graph for backward(). Throws
// GraphError on a missing/mis-shaped binding and NonFiniteError when any
// node produces NaN or Inf.
double evaluate(ExprGraph& graph, const Bindings& bindings);

// Reverse accumulation over the values cached by the last evaluate().
// |u| has subgradient 0 at u = 0.
GradientSet backward(ExprGraph& graph, std::span<const NodeId> wrt);

// evaluate() followed by backward().
GradientSet gradients(ExprGraph& graph, const Bindings& bindings, std::span<const NodeId> wrt);

}  // namespace fairdemand::diff
