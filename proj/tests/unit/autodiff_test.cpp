#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "seqagree/autodiff/grad_check.hpp"
#include "seqagree/autodiff/graph.hpp"
#include "seqagree/errors.hpp"

using namespace seqagree;
using namespace seqagree::ad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Checks d(sum(w .* f(x)))/dx for a random weighting w against central
// differences, which exercises the full Jacobian-vector product of f.
void expect_jvp_matches(const std::function<Var(Graph&, std::vector<Var>&)>& f,
                        std::vector<Tensor>& inputs, std::uint64_t seed, double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor weights;
  {
    Graph g;
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(g.leaf(static_cast<const Tensor&>(t)));
    weights = random_tensor(f(g, vars).shape(), rng);
    weights.set_requires_grad(false);
  }
  LossBuilder build = [&](Graph& g) {
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(g.leaf(t));
    return sum(mul(f(g, vars), g.constant(weights)));
  };
  std::vector<Tensor*> ptrs;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ptrs.push_back(&inputs[i]);
    names.push_back("input" + std::to_string(i));
  }
  GradCheckOptions opts;
  opts.tolerance = tol;
  const auto report = grad_check(build, ptrs, names, opts);
  EXPECT_TRUE(report.passed) << "max relative error " << report.max_relative_error;
}

}  // namespace

TEST(Autodiff, TanhOfZeroIsZero) {
  Graph g;
  Var out = tanh(g.constant(Tensor({1, 5})));
  for (double v : out.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, SoftmaxOfEqualLogitsIsUniform) {
  Graph g;
  Var out = softmax(g.constant(Tensor({1, 4})), 1);
  for (double v : out.value().values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Autodiff, MatmulByHand) {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  const Tensor& c = matmul(a, b).value();
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(c.at(0, 0), 22.0);
  EXPECT_EQ(c.at(0, 1), 28.0);
  EXPECT_EQ(c.at(1, 0), 49.0);
  EXPECT_EQ(c.at(1, 1), 64.0);
}

TEST(Autodiff, ShapeMismatchNamesOpAndExtents) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(add(a, g.constant(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(slice(a, 1, 2, 4), ShapeError);
  EXPECT_THROW(conv1d_same(a, g.constant(Tensor({5, 2, 4}))), ShapeError);
}

TEST(Autodiff, NonFiniteInputRejected) {
  Graph g;
  Tensor bad({1, 2}, {1.0, std::nan("")});
  EXPECT_THROW(g.leaf(bad), NonFiniteError);
  EXPECT_THROW(g.constant(Tensor::scalar(INFINITY)), NonFiniteError);
  Var big = g.constant(Tensor::scalar(1e300));
  EXPECT_THROW(mul(big, big), NonFiniteError);
}

TEST(Autodiff, SumGradientIsOnes) {
  Tensor x({3, 4});
  x.set_requires_grad(true);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i);
  Graph g;
  g.backward(sum(g.leaf(x)));
  for (double v : x.grad()) EXPECT_EQ(v, 1.0);
}

TEST(Autodiff, MseOfSelfHasZeroGradient) {
  Tensor x({2, 3}, {1, -2, 3, 0.5, 7, -1}, true);
  Graph g;
  Var v = g.leaf(x);
  g.backward(mse(v, v));
  for (double d : x.grad()) EXPECT_EQ(d, 0.0);
}

TEST(Autodiff, TanhMatmulMseAgainstFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor w = random_tensor({3, 3}, rng);
  Tensor v = random_tensor({3, 1}, rng);
  Tensor target = random_tensor({3, 1}, rng);
  v.set_requires_grad(false);
  target.set_requires_grad(false);
  LossBuilder build = [&](Graph& g) {
    return mse(tanh(matmul(g.leaf(w), g.leaf(v))), g.leaf(target));
  };
  std::vector<Tensor*> ptrs{&w};
  std::vector<std::string> names{"W"};
  GradCheckOptions opts;
  opts.step = 1e-5;
  opts.tolerance = 1e-6;
  const auto report = grad_check(build, ptrs, names, opts);
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(Autodiff, EveryOpJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  {
    std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({3, 4}, rng)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, in, 1);
  }
  {
    std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({1, 4}, rng)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return add(v[0], v[1]); }, in, 2);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return sub(v[0], v[1]); }, in, 3);
  }
  {
    std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return mul(v[0], v[1]); }, in, 4);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return mse(v[0], v[1]); }, in, 5);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return concat(v, 0); }, in, 6);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return concat(v, 1); }, in, 7);
  }
  {
    std::vector<Tensor> in{random_tensor({3, 5}, rng, -2.0, 2.0)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return slice(v[0], 0, 1, 3); }, in, 8);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return slice(v[0], 1, 2, 5); }, in, 9);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return tanh(v[0]); }, in, 10);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return sigmoid(v[0]); }, in, 11);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return softmax(v[0], 0); }, in, 12);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return softmax(v[0], 1); }, in, 13);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return sum(v[0]); }, in, 14);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return scale(v[0], -1.7); }, in, 15);
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return transpose(v[0]); }, in, 16);
  }
  {
    // Keep relu inputs away from the kink.
    std::vector<Tensor> in{random_tensor({2, 4}, rng, 0.1, 1.0)};
    for (std::size_t i = 0; i < 4; ++i) in[0][i] = -in[0][i];
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return relu(v[0]); }, in, 17);
  }
  {
    std::vector<Tensor> in{random_tensor({6, 2}, rng), random_tensor({5, 2, 3}, rng)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return conv1d_same(v[0], v[1]); }, in, 18);
  }
  {
    std::vector<Tensor> in{random_tensor({4, 1}, rng, -3.0, 3.0), random_tensor({4, 1}, rng, 0.0, 1.0)};
    expect_jvp_matches([](Graph&, std::vector<Var>& v) { return bce_with_logits(v[0], v[1]); }, in, 19);
  }
}

TEST(Autodiff, Conv1dSamePaddingByHand) {
  Graph g;
  // Signal 1,2,3 with a width-3 filter (1, 10, 100): out[t] = x[t-1] + 10 x[t] + 100 x[t+1].
  Var x = g.constant(Tensor::matrix(3, 1, {1, 2, 3}));
  Var w = g.constant(Tensor({3, 1, 1}, {1, 10, 100}));
  const Tensor& y = conv1d_same(x, w).value();
  EXPECT_EQ(y[0], 210.0);
  EXPECT_EQ(y[1], 321.0);
  EXPECT_EQ(y[2], 32.0);
}

TEST(Autodiff, GradientAccumulatesOverMultipleUses) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 2}, rng);
  Tensor x_copy = x;
  Tensor w = random_tensor({2, 2}, rng);
  w.set_requires_grad(false);
  {
    Graph g;
    Var xv = g.leaf(x);
    Var wv = g.leaf(w);
    g.backward(sum(add(tanh(matmul(xv, wv)), mul(xv, xv))));
  }
  // Same function with the shared tensor split into independent duplicates.
  Tensor dup_a = x_copy, dup_b = x_copy, dup_c = x_copy;
  {
    Graph g;
    Var wv = g.leaf(w);
    g.backward(sum(add(tanh(matmul(g.leaf(dup_a), wv)), mul(g.leaf(dup_b), g.leaf(dup_c)))));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(x.grad()[i], dup_a.grad()[i] + dup_b.grad()[i] + dup_c.grad()[i], 1e-15);
  }
}

TEST(Autodiff, ForwardIsBitwiseRepeatable) {
  std::mt19937_64 rng(9);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  auto run = [&] {
    Graph g;
    return softmax(tanh(matmul(g.leaf(a), g.leaf(b))), 1).value();
  };
  EXPECT_TRUE(run() == run());
}

TEST(Autodiff, BackwardErrors) {
  Graph g;
  EXPECT_THROW(g.backward(Var{}), GraphError);
  Tensor x({2, 2});
  x.set_requires_grad(true);
  Var v = tanh(g.leaf(x));
  EXPECT_THROW(g.backward(v), GraphError);
  Var loss = sum(v);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), GraphError);
}

TEST(Autodiff, BackwardVisitsEachNodeOnce) {
  Tensor x({1, 3}, {0.1, 0.2, 0.3}, true);
  Graph g;
  Var v = g.leaf(x);
  Var h = tanh(v);
  Var loss = sum(add(h, h));
  g.backward(loss);
  EXPECT_EQ(g.nodes_visited(), 3u);  // tanh, add, sum
}

TEST(Autodiff, SoftmaxRowsNormalised) {
  std::mt19937_64 rng(21);
  Graph g;
  Var s = softmax(g.constant(random_tensor({5, 7}, rng, -30, 30)), 1);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(s.value().at(r, c), 0.0);
      total += s.value().at(r, c);
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(GradCheck, ConstantFunctionPasses) {
  Tensor p({2, 2}, {1, 2, 3, 4}, true);
  std::vector<Tensor*> ptrs{&p};
  std::vector<std::string> names{"p"};
  const auto report = grad_check([](Graph& g) { return g.constant(Tensor::scalar(3.0)); }, ptrs, names);
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.max_relative_error, 0.0);
  for (double d : p.grad()) EXPECT_EQ(d, 0.0);
}

TEST(GradCheck, DetectsNonDeterminism) {
  Tensor p({1, 1}, {1.0}, true);
  std::vector<Tensor*> ptrs{&p};
  std::vector<std::string> names{"p"};
  int calls = 0;
  LossBuilder flaky = [&](Graph& g) { return g.constant(Tensor::scalar(++calls)); };
  EXPECT_THROW(grad_check(flaky, ptrs, names), NonDeterministicError);
}

TEST(Parameter, AccessCounterCountsConsumingOps) {
  Parameter p("w", Tensor({2, 2}, {1, 0, 0, 1}));
  Graph g;
  Var w = g.parameter(p);
  EXPECT_EQ(p.access_count(), 0u);
  Var x = g.constant(Tensor({1, 2}, {1, 2}));
  matmul(x, w);
  matmul(x, w);
  EXPECT_EQ(p.access_count(), 2u);
  p.reset_access_count();
  EXPECT_EQ(p.access_count(), 0u);
}

TEST(Parameter, FrozenBindingReceivesNoGradient) {
  Parameter p("w", Tensor({1, 2}, {0.5, -0.5}));
  Tensor x({1, 2}, {1.0, 2.0}, true);
  Graph g;
  g.backward(sum(mul(g.parameter(p, false), g.leaf(x))));
  for (double d : p.tensor().grad()) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(x.grad()[0], 0.5);
}
