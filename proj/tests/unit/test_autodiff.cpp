#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "tmcseg/autodiff.hpp"
#include "tmcseg/errors.hpp"

using tmcseg::ad::Graph;
using tmcseg::ad::Var;

TEST(Autodiff, SquareViaMul) {
  Graph g;
  const Var x = g.variable(3.0);
  const Var y = g.mul(x, x);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.scalar(y), 9.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 6.0);
}

TEST(Autodiff, SinAtZero) {
  Graph g;
  const Var x = g.variable(0.0);
  g.backward(g.sin(x));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 1.0);
}

TEST(Autodiff, SharedOperandAccumulates) {
  Graph g;
  const Var x = g.variable(2.0);
  const Var y = g.add(g.mul(x, x), g.scale(x, 3.0));
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 7.0);
}

TEST(Autodiff, ShapeMismatchIsRejected) {
  Graph g;
  const Var a = g.constant({1.0, 2.0});
  const Var b = g.constant({1.0, 2.0, 3.0});
  EXPECT_THROW(g.add(a, b), tmcseg::ShapeError);
  EXPECT_THROW(g.dot(a, b), tmcseg::ShapeError);
  EXPECT_THROW(g.matvec(g.constant({1.0, 2.0, 3.0}), a), tmcseg::ShapeError);
  EXPECT_THROW(g.slice(a, 1, 2), tmcseg::ShapeError);
}

TEST(Autodiff, DomainErrors) {
  Graph g;
  EXPECT_THROW(g.log(g.constant(-1.0)), tmcseg::NumericDomainError);
  EXPECT_THROW(g.log(g.constant(0.0)), tmcseg::NumericDomainError);
  EXPECT_THROW(g.sqrt(g.constant(0.0)), tmcseg::NumericDomainError);
  EXPECT_THROW(g.sqrt(g.constant({1.0, -2.0})), tmcseg::NumericDomainError);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  Graph g;
  const Var v = g.constant({1.0, 2.0});
  EXPECT_THROW(g.backward(g.exp(v)), tmcseg::ContractError);
}

TEST(Autodiff, SecondBackwardRejectedUntilReset) {
  Graph g;
  const Var x = g.variable({0.3, -1.2});
  const Var y = g.sum(g.mul(g.tanh(x), x));
  g.backward(y);
  const std::vector<double> first(g.grad(x).begin(), g.grad(x).end());
  EXPECT_THROW(g.backward(y), tmcseg::ContractError);
  g.reset_adjoints();
  g.backward(y);
  const auto second = g.grad(x);
  ASSERT_EQ(second.size(), first.size());
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(second[i], first[i]);
}

TEST(Autodiff, GradBeforeBackwardIsRejected) {
  Graph g;
  const Var x = g.variable(1.0);
  EXPECT_THROW(g.grad(x), tmcseg::ContractError);
}

TEST(Autodiff, SoftplusIsOverflowSafe) {
  Graph g;
  const Var x = g.variable({1000.0, -1000.0, 0.0});
  const Var s = g.softplus(x);
  EXPECT_DOUBLE_EQ(g.value(s)[0], 1000.0);
  EXPECT_GE(g.value(s)[1], 0.0);
  EXPECT_LT(g.value(s)[1], 1e-300);
  EXPECT_DOUBLE_EQ(g.value(s)[2], std::log(2.0));
  g.backward(g.sum(s));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[2], 0.5);
}

TEST(Autodiff, SoftmaxMatchesDirectFormula) {
  Graph g;
  const std::vector<double> v = {0.5, -1.0, 2.0};
  const Var x = g.variable(v);
  const auto sm = g.value(g.softmax(x));
  const auto lsm = g.value(g.log_softmax(x));
  double z = 0.0;
  for (double a : v) z += std::exp(a);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(sm[i], std::exp(v[i]) / z, 1e-15);
    EXPECT_NEAR(lsm[i], v[i] - std::log(z), 1e-14);
  }
}

TEST(Autodiff, ClampMinPassesGradientAboveFloor) {
  Graph g;
  const Var x = g.variable({0.5, -0.5});
  const Var c = g.clamp_min(x, 0.1);
  EXPECT_DOUBLE_EQ(g.value(c)[1], 0.1);
  g.backward(g.sum(c));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[1], 0.0);
}

TEST(Autodiff, LogClampedCountsEvents) {
  Graph g;
  const Var x = g.variable({0.5, 0.0, 1e-20});
  const Var l = g.log_clamped(x, 1e-12);
  EXPECT_DOUBLE_EQ(g.value(l)[1], std::log(1e-12));
  EXPECT_EQ(g.clamp_events(), 2u);
  g.backward(g.sum(l));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 2.0);
  EXPECT_DOUBLE_EQ(g.grad(x)[1], 0.0);
}

TEST(Autodiff, ForwardIsDeterministic) {
  auto eval = [] {
    Graph g;
    const Var x = g.variable({0.1, 0.2, 0.3});
    return g.scalar(g.sum(g.softplus(g.mul(g.sin(x), g.exp(x)))));
  };
  EXPECT_EQ(eval(), eval());
}

// ---------------------------------------------------------------------------
// Random graphs against central finite differences.

namespace {

constexpr std::size_t kDim = 3;

/// Builds a random expression over the given leaves; the same seed always yields the same program.
struct RandomProgram {
  std::uint64_t seed;
  std::size_t nodes;

  Var build(Graph& g, const std::vector<Var>& leaves, Var weight) const {
    std::mt19937_64 rng(seed);
    std::vector<Var> pool = leaves;
    auto pick = [&] { return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]; };
    auto positive = [&](Var a) { return g.shift(g.exp(g.tanh(a)), 0.05); };
    while (g.size() < nodes) {
      const int op = std::uniform_int_distribution<int>(0, 21)(rng);
      const Var a = pick();
      const Var b = pick();
      Var out;
      switch (op) {
        case 0: out = g.add(a, b); break;
        case 1: out = g.sub(a, b); break;
        case 2: out = g.mul(a, b); break;
        case 3: out = g.div(a, positive(b)); break;
        case 4: out = g.neg(a); break;
        case 5: out = g.matvec(weight, a); break;
        case 6: out = g.affine(weight, a, b); break;
        case 7: out = g.mul(a, g.concat({g.dot(a, b), g.slice(b, 0, 2)})); break;
        case 8: out = g.concat({g.slice(a, 1, 2), g.sum(b)}); break;
        case 9: out = g.tanh(g.exp(g.scale(a, 0.3))); break;
        case 10: out = g.log(positive(a)); break;
        case 11: out = g.sin(a); break;
        case 12: out = g.tanh(a); break;
        case 13: out = g.relu(a); break;
        case 14: out = g.sigmoid(a); break;
        case 15: out = g.softplus(a); break;
        case 16: out = g.square(g.tanh(a)); break;
        case 17: out = g.sqrt(positive(a)); break;
        case 18: out = g.softmax(a); break;
        case 19: out = g.log_softmax(a); break;
        case 20: out = g.shift(g.scale(a, -0.7), 0.2); break;
        default: out = g.log_clamped(g.sigmoid(a), 1e-12); break;
      }
      pool.push_back(out);
    }
    Var root = g.zeros(1);
    for (std::size_t i = leaves.size(); i < pool.size(); ++i) root = g.add(root, g.sum(g.tanh(pool[i])));
    return root;
  }
};

double evaluate(const RandomProgram& p, const std::vector<double>& flat) {
  Graph g;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < 2; ++i) leaves.push_back(g.variable(std::span<const double>(flat.data() + i * kDim, kDim)));
  const Var w = g.variable(std::span<const double>(flat.data() + 2 * kDim, kDim * kDim));
  return g.scalar(p.build(g, leaves, w));
}

}  // namespace

TEST(Autodiff, RandomGraphsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    const RandomProgram prog{1000 + trial, 40 + 8 * trial};
    ASSERT_LE(prog.nodes, 200u + 40u);
    std::vector<double> flat(2 * kDim + kDim * kDim);
    for (double& v : flat) v = nd(rng);

    Graph g;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < 2; ++i) leaves.push_back(g.variable(std::span<const double>(flat.data() + i * kDim, kDim)));
    const Var w = g.variable(std::span<const double>(flat.data() + 2 * kDim, kDim * kDim));
    const Var root = prog.build(g, leaves, w);
    g.backward(root);
    std::vector<double> analytic;
    for (Var v : {leaves[0], leaves[1], w})
      for (double d : g.grad(v)) analytic.push_back(d);

    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      auto plus = flat, minus = flat;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (evaluate(prog, plus) - evaluate(prog, minus)) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
      if (scale < 1e-3)
        EXPECT_NEAR(analytic[i], fd, 1e-7) << "trial " << trial << " param " << i;
      else
        EXPECT_LE(std::abs(analytic[i] - fd) / scale, 1e-4) << "trial " << trial << " param " << i;
    }
  }
}
