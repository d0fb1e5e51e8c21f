#include "tmcseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tmcseg/errors.hpp"

namespace tmcseg::ad {
namespace {

double softplus_value(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

[[noreturn]] void shape_error(const char* op, std::size_t lhs, std::size_t rhs) {
  throw ShapeError(std::string(op) + ": operand dimensions " + std::to_string(lhs) + " and " +
                   std::to_string(rhs) + " do not conform");
}

}  // namespace

void Graph::clear() {
  nodes_.clear();
  values_.clear();
  adjoints_.clear();
  operands_.clear();
  clamp_events_ = 0;
  backward_done_ = false;
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("autodiff: variable does not belong to this graph");
  return nodes_[v.id];
}

Var Graph::push(Op op, std::size_t len, std::uint32_t a, std::uint32_t b, std::uint32_t c) {
  if (backward_done_) throw ContractError("autodiff: cannot record after backward(); call clear()");
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.off = values_.size();
  n.len = len;
  values_.resize(values_.size() + len, 0.0);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(std::span<const double> v) {
  const Var out = push(Op::Leaf, v.size());
  std::copy(v.begin(), v.end(), values_.begin() + static_cast<std::ptrdiff_t>(nodes_[out.id].off));
  return out;
}

Var Graph::zeros(std::size_t n) { return push(Op::Leaf, n); }

Var Graph::binary(Op op, Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.len != nb.len) {
    static constexpr const char* names[] = {"", "add", "sub", "mul", "div"};
    shape_error(names[static_cast<int>(op)], na.len, nb.len);
  }
  const Var out = push(op, na.len, a.id, b.id);
  const double* x = values_.data() + na.off;
  const double* y = values_.data() + nb.off;
  double* r = values_.data() + nodes_[out.id].off;
  const std::size_t n = na.len;
  switch (op) {
    case Op::Add:
      for (std::size_t i = 0; i < n; ++i) r[i] = x[i] + y[i];
      break;
    case Op::Sub:
      for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - y[i];
      break;
    case Op::Mul:
      for (std::size_t i = 0; i < n; ++i) r[i] = x[i] * y[i];
      break;
    case Op::Div:
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] == 0.0) throw NumericDomainError("div: division by zero");
        r[i] = x[i] / y[i];
      }
      break;
    default:
      break;
  }
  return out;
}

Var Graph::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Graph::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Graph::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Graph::div(Var a, Var b) { return binary(Op::Div, a, b); }

Var Graph::unary(Op op, Var a) {
  const Node na = node(a);
  const Var out = push(op, na.len, a.id);
  const double* x = values_.data() + na.off;
  double* r = values_.data() + nodes_[out.id].off;
  const std::size_t n = na.len;
  switch (op) {
    case Op::Neg:
      for (std::size_t i = 0; i < n; ++i) r[i] = -x[i];
      break;
    case Op::Exp:
      for (std::size_t i = 0; i < n; ++i) r[i] = std::exp(x[i]);
      break;
    case Op::Log:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= 0.0) throw NumericDomainError("log: non-positive argument " + std::to_string(x[i]));
        r[i] = std::log(x[i]);
      }
      break;
    case Op::Sin:
      for (std::size_t i = 0; i < n; ++i) r[i] = std::sin(x[i]);
      break;
    case Op::Tanh:
      for (std::size_t i = 0; i < n; ++i) r[i] = std::tanh(x[i]);
      break;
    case Op::Relu:
      for (std::size_t i = 0; i < n; ++i) r[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Op::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) r[i] = sigmoid_value(x[i]);
      break;
    case Op::Softplus:
      for (std::size_t i = 0; i < n; ++i) r[i] = softplus_value(x[i]);
      break;
    case Op::Square:
      for (std::size_t i = 0; i < n; ++i) r[i] = x[i] * x[i];
      break;
    case Op::Sqrt:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= 0.0) throw NumericDomainError("sqrt: non-positive argument " + std::to_string(x[i]));
        r[i] = std::sqrt(x[i]);
      }
      break;
    case Op::Sum: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += x[i];
      r[0] = s;
      break;
    }
    default:
      break;
  }
  return out;
}

Var Graph::neg(Var a) { return unary(Op::Neg, a); }
Var Graph::exp(Var a) { return unary(Op::Exp, a); }
Var Graph::log(Var a) { return unary(Op::Log, a); }
Var Graph::sin(Var a) { return unary(Op::Sin, a); }
Var Graph::tanh(Var a) { return unary(Op::Tanh, a); }
Var Graph::relu(Var a) { return unary(Op::Relu, a); }
Var Graph::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Graph::softplus(Var a) { return unary(Op::Softplus, a); }
Var Graph::square(Var a) { return unary(Op::Square, a); }
Var Graph::sqrt(Var a) { return unary(Op::Sqrt, a); }

Var Graph::sum(Var a) {
  const Node na = node(a);
  const Var out = push(Op::Sum, 1, a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < na.len; ++i) s += values_[na.off + i];
  values_[nodes_[out.id].off] = s;
  return out;
}

Var Graph::matvec(Var w, Var x) {
  const Node nw = node(w);
  const Node nx = node(x);
  if (nx.len == 0 || nw.len % nx.len != 0) shape_error("matvec", nw.len, nx.len);
  const std::size_t rows = nw.len / nx.len;
  const std::size_t cols = nx.len;
  const Var out = push(Op::Matvec, rows, w.id, x.id);
  const double* W = values_.data() + nw.off;
  const double* X = values_.data() + nx.off;
  double* r = values_.data() + nodes_[out.id].off;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    const double* row = W + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * X[j];
    r[i] = s;
  }
  return out;
}

Var Graph::affine(Var w, Var x, Var b) {
  const Node nw = node(w);
  const Node nx = node(x);
  const Node nb = node(b);
  const std::size_t rows = nb.len;
  const std::size_t cols = nx.len;
  if (nw.len != rows * cols) shape_error("affine", nw.len, rows * cols);
  const Var out = push(Op::Affine, rows, w.id, x.id, b.id);
  const double* W = values_.data() + nw.off;
  const double* X = values_.data() + nx.off;
  const double* B = values_.data() + nb.off;
  double* r = values_.data() + nodes_[out.id].off;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = B[i];
    const double* row = W + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += row[j] * X[j];
    r[i] = s;
  }
  return out;
}

Var Graph::dot(Var a, Var b) {
  const Node na = node(a);
  const Node nb = node(b);
  if (na.len != nb.len) shape_error("dot", na.len, nb.len);
  const Var out = push(Op::Dot, 1, a.id, b.id);
  double s = 0.0;
  for (std::size_t i = 0; i < na.len; ++i) s += values_[na.off + i] * values_[nb.off + i];
  values_[nodes_[out.id].off] = s;
  return out;
}

Var Graph::concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var Graph::concat(std::span<const Var> parts) {
  std::size_t total = 0;
  for (Var p : parts) total += node(p).len;
  const auto start = static_cast<std::uint32_t>(operands_.size());
  for (Var p : parts) operands_.push_back(p.id);
  const Var out = push(Op::Concat, total);
  nodes_[out.id].aux = start;
  nodes_[out.id].c = static_cast<std::uint32_t>(parts.size());
  std::size_t pos = nodes_[out.id].off;
  for (Var p : parts) {
    const Node& np = nodes_[p.id];
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(np.off), np.len,
                values_.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += np.len;
  }
  return out;
}

Var Graph::slice(Var a, std::size_t offset, std::size_t length) {
  const Node na = node(a);
  if (offset + length > na.len) shape_error("slice", na.len, offset + length);
  const Var out = push(Op::Slice, length, a.id);
  nodes_[out.id].aux = static_cast<std::uint32_t>(offset);
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(na.off + offset), length,
              values_.begin() + static_cast<std::ptrdiff_t>(nodes_[out.id].off));
  return out;
}

Var Graph::log_clamped(Var a, double eps) {
  const Node na = node(a);
  const Var out = push(Op::LogClamped, na.len, a.id);
  nodes_[out.id].k = eps;
  for (std::size_t i = 0; i < na.len; ++i) {
    const double x = values_[na.off + i];
    if (x > eps) {
      values_[nodes_[out.id].off + i] = std::log(x);
    } else {
      values_[nodes_[out.id].off + i] = std::log(eps);
      ++clamp_events_;
    }
  }
  return out;
}

Var Graph::scale(Var a, double k) {
  const Node na = node(a);
  const Var out = push(Op::Scale, na.len, a.id);
  nodes_[out.id].k = k;
  for (std::size_t i = 0; i < na.len; ++i) values_[nodes_[out.id].off + i] = k * values_[na.off + i];
  return out;
}

Var Graph::shift(Var a, double k) {
  const Node na = node(a);
  const Var out = push(Op::Shift, na.len, a.id);
  nodes_[out.id].k = k;
  for (std::size_t i = 0; i < na.len; ++i) values_[nodes_[out.id].off + i] = values_[na.off + i] + k;
  return out;
}

Var Graph::clamp_min(Var a, double floor) {
  const Node na = node(a);
  const Var out = push(Op::ClampMin, na.len, a.id);
  nodes_[out.id].k = floor;
  for (std::size_t i = 0; i < na.len; ++i) values_[nodes_[out.id].off + i] = std::max(values_[na.off + i], floor);
  return out;
}

Var Graph::softmax(Var a) {
  const Node na = node(a);
  if (na.len == 0) throw ShapeError("softmax: empty operand");
  const Var out = push(Op::Softmax, na.len, a.id);
  const double* x = values_.data() + na.off;
  double* r = values_.data() + nodes_[out.id].off;
  const double m = *std::max_element(x, x + na.len);
  double s = 0.0;
  for (std::size_t i = 0; i < na.len; ++i) s += (r[i] = std::exp(x[i] - m));
  for (std::size_t i = 0; i < na.len; ++i) r[i] /= s;
  return out;
}

Var Graph::log_softmax(Var a) {
  const Node na = node(a);
  if (na.len == 0) throw ShapeError("log_softmax: empty operand");
  const Var out = push(Op::LogSoftmax, na.len, a.id);
  const double* x = values_.data() + na.off;
  double* r = values_.data() + nodes_[out.id].off;
  const double m = *std::max_element(x, x + na.len);
  double s = 0.0;
  for (std::size_t i = 0; i < na.len; ++i) s += std::exp(x[i] - m);
  const double lse = m + std::log(s);
  for (std::size_t i = 0; i < na.len; ++i) r[i] = x[i] - lse;
  return out;
}

std::span<const double> Graph::value(Var v) const {
  const Node& n = node(v);
  return {values_.data() + n.off, n.len};
}

double Graph::scalar(Var v) const {
  const Node& n = node(v);
  if (n.len != 1) throw ShapeError("scalar: node has " + std::to_string(n.len) + " components");
  return values_[n.off];
}

std::size_t Graph::dim(Var v) const { return node(v).len; }

Op Graph::op(Var v) const { return node(v).op; }

std::span<const double> Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_) throw ContractError("autodiff: grad() requested before backward()");
  return {adjoints_.data() + n.off, n.len};
}

void Graph::reset_adjoints() {
  adjoints_.clear();
  backward_done_ = false;
}

void Graph::backward(Var root) {
  const Node& r = node(root);
  if (r.len != 1) throw ContractError("backward: root must be scalar, has " + std::to_string(r.len) + " components");
  if (backward_done_) throw ContractError("backward: already run on this graph; call reset_adjoints() first");
  adjoints_.assign(values_.size(), 0.0);
  adjoints_[r.off] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) backprop_node(nodes_[i]);
  backward_done_ = true;
}

void Graph::backprop_node(const Node& n) {
  if (n.op == Op::Leaf) return;
  const double* g = adjoints_.data() + n.off;
  const double* out = values_.data() + n.off;
  const std::size_t len = n.len;

  auto in_val = [&](std::uint32_t id) { return values_.data() + nodes_[id].off; };
  auto in_adj = [&](std::uint32_t id) { return adjoints_.data() + nodes_[id].off; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add: {
      double* da = in_adj(n.a);
      double* db = in_adj(n.b);
      for (std::size_t i = 0; i < len; ++i) {
        da[i] += g[i];
        db[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      double* da = in_adj(n.a);
      double* db = in_adj(n.b);
      for (std::size_t i = 0; i < len; ++i) {
        da[i] += g[i];
        db[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      const double* x = in_val(n.a);
      const double* y = in_val(n.b);
      double* da = in_adj(n.a);
      double* db = in_adj(n.b);
      for (std::size_t i = 0; i < len; ++i) {
        da[i] += g[i] * y[i];
        db[i] += g[i] * x[i];
      }
      break;
    }
    case Op::Div: {
      const double* y = in_val(n.b);
      double* da = in_adj(n.a);
      double* db = in_adj(n.b);
      for (std::size_t i = 0; i < len; ++i) {
        da[i] += g[i] / y[i];
        db[i] -= g[i] * out[i] / y[i];
      }
      break;
    }
    case Op::Neg: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] -= g[i];
      break;
    }
    case Op::Matvec:
    case Op::Affine: {
      const std::size_t cols = nodes_[n.b].len;
      const double* W = in_val(n.a);
      const double* X = in_val(n.b);
      double* dW = in_adj(n.a);
      double* dX = in_adj(n.b);
      for (std::size_t r = 0; r < len; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* row = W + r * cols;
        double* drow = dW + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
          drow[c] += gr * X[c];
          dX[c] += gr * row[c];
        }
      }
      if (n.op == Op::Affine) {
        double* db = in_adj(n.c);
        for (std::size_t r = 0; r < len; ++r) db[r] += g[r];
      }
      break;
    }
    case Op::Dot: {
      const std::size_t m = nodes_[n.a].len;
      const double* x = in_val(n.a);
      const double* y = in_val(n.b);
      double* da = in_adj(n.a);
      double* db = in_adj(n.b);
      for (std::size_t i = 0; i < m; ++i) {
        da[i] += g[0] * y[i];
        db[i] += g[0] * x[i];
      }
      break;
    }
    case Op::Concat: {
      std::size_t pos = 0;
      for (std::uint32_t k = 0; k < n.c; ++k) {
        const std::uint32_t id = operands_[n.aux + k];
        double* dp = in_adj(id);
        const std::size_t m = nodes_[id].len;
        for (std::size_t i = 0; i < m; ++i) dp[i] += g[pos + i];
        pos += m;
      }
      break;
    }
    case Op::Slice: {
      double* da = in_adj(n.a) + n.aux;
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
      break;
    }
    case Op::Sum: {
      const std::size_t m = nodes_[n.a].len;
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < m; ++i) da[i] += g[0];
      break;
    }
    case Op::Exp: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * out[i];
      break;
    }
    case Op::Log: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] / x[i];
      break;
    }
    case Op::LogClamped: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i)
        if (x[i] > n.k) da[i] += g[i] / x[i];
      break;
    }
    case Op::Sin: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * std::cos(x[i]);
      break;
    }
    case Op::Tanh: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * (1.0 - out[i] * out[i]);
      break;
    }
    case Op::Relu: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i)
        if (x[i] > 0.0) da[i] += g[i];
      break;
    }
    case Op::Sigmoid: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * out[i] * (1.0 - out[i]);
      break;
    }
    case Op::Softplus: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * sigmoid_value(x[i]);
      break;
    }
    case Op::Square: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += 2.0 * g[i] * x[i];
      break;
    }
    case Op::Sqrt: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * 0.5 / out[i];
      break;
    }
    case Op::Scale: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] * n.k;
      break;
    }
    case Op::Shift: {
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i];
      break;
    }
    case Op::ClampMin: {
      const double* x = in_val(n.a);
      double* da = in_adj(n.a);
      for (std::size_t i = 0; i < len; ++i)
        if (x[i] > n.k) da[i] += g[i];
      break;
    }
    case Op::Softmax: {
      double* da = in_adj(n.a);
      double gs = 0.0;
      for (std::size_t i = 0; i < len; ++i) gs += g[i] * out[i];
      for (std::size_t i = 0; i < len; ++i) da[i] += out[i] * (g[i] - gs);
      break;
    }
    case Op::LogSoftmax: {
      double* da = in_adj(n.a);
      double gs = 0.0;
      for (std::size_t i = 0; i < len; ++i) gs += g[i];
      for (std::size_t i = 0; i < len; ++i) da[i] += g[i] - std::exp(out[i]) * gs;
      break;
    }
  }
}

}  // namespace tmcseg::ad
