#pragma once

// Tape-based reverse-mode automatic differentiation over dense real vectors.
//
// A Graph is an append-only tape. Every primitive evaluates eagerly when it is
// recorded, so values are available immediately; backward() then sweeps the
// tape once in reverse creation order. Scalars are vectors of length one.
// Matrices are stored row-major in a single vector node and only ever appear
// as the left operand of matvec/affine.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace tmcseg::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Matvec,
  Affine,
  Dot,
  Concat,
  Slice,
  Sum,
  Exp,
  Log,
  LogClamped,
  Sin,
  Tanh,
  Relu,
  Sigmoid,
  Softplus,
  Square,
  Sqrt,
  Scale,
  Shift,
  ClampMin,
  Softmax,
  LogSoftmax,
};

/// Handle to a node of a Graph. Only meaningful for the graph that created it.
struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;

  constexpr bool valid() const noexcept { return id != kNone; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  /// Drops every node but keeps allocated capacity for the next pass.
  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

  // Leaves. Constants and differentiable inputs are the same kind of node;
  // the two names only document intent at call sites.
  Var constant(std::span<const double> v);
  Var constant(std::initializer_list<double> v) { return constant(std::span<const double>(v.begin(), v.size())); }
  Var constant(double v) { return constant(std::span<const double>(&v, 1)); }
  Var variable(std::span<const double> v) { return constant(v); }
  Var variable(std::initializer_list<double> v) { return constant(v); }
  Var variable(double v) { return constant(v); }
  Var zeros(std::size_t n);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  /// W (rows x x.dim, row-major) times x.
  Var matvec(Var w, Var x);
  /// W x + b; rows are taken from b.
  Var affine(Var w, Var x, Var b);
  Var dot(Var a, Var b);
  Var concat(std::initializer_list<Var> parts);
  Var concat(std::span<const Var> parts);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var sum(Var a);
  Var exp(Var a);
  Var log(Var a);
  /// log(max(a, eps)); entries below eps get zero gradient and are counted in clamp_events().
  Var log_clamped(Var a, double eps);
  Var sin(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var square(Var a);
  Var sqrt(Var a);
  Var scale(Var a, double k);
  Var shift(Var a, double k);
  /// max(a, floor) with the gradient passed only where a > floor.
  Var clamp_min(Var a, double floor);
  Var softmax(Var a);
  Var log_softmax(Var a);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t dim(Var v) const;
  Op op(Var v) const;

  /// Accumulates d(root)/d(node) into every node's adjoint. Root must be a scalar.
  /// A second call without reset_adjoints() is rejected with ContractError.
  void backward(Var root);
  bool backward_done() const noexcept { return backward_done_; }
  void reset_adjoints();
  std::span<const double> grad(Var v) const;

  std::size_t clamp_events() const noexcept { return clamp_events_; }

 private:
  struct Node {
    Op op;
    std::uint32_t a = Var::kNone;
    std::uint32_t b = Var::kNone;
    std::uint32_t c = Var::kNone;
    std::uint32_t aux = 0;
    std::size_t off = 0;
    std::size_t len = 0;
    double k = 0.0;
  };

  const Node& node(Var v) const;
  Var push(Op op, std::size_t len, std::uint32_t a = Var::kNone, std::uint32_t b = Var::kNone,
           std::uint32_t c = Var::kNone);
  Var unary(Op op, Var a);
  Var binary(Op op, Var a, Var b);
  void backprop_node(const Node& n);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
  std::vector<std::uint32_t> operands_;
  std::size_t clamp_events_ = 0;
  bool backward_done_ = false;
};

}  // namespace tmcseg::ad
