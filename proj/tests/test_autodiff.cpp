#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace modcap;
using namespace modcap::testing;
using V = Var<double>;
using Vs = std::vector<V>;

namespace {

constexpr double kOpTol = 1e-5;

double check(const Fn& f, std::vector<Tensor<double>> in) { return max_rel_grad_error(f, std::move(in)); }

struct OpGrad : ::testing::Test {
  std::mt19937_64 rng{1234};
  Tensor<double> r(Shape s) { return random_tensor(std::move(s), rng); }
};

}  // namespace

TEST(Autodiff, ElementwiseExamples) {
  Tape<double> t;
  EXPECT_DOUBLE_EQ(sigmoid(t.variable(Tensor<double>::scalar(0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(relu(t.variable(Tensor<double>::scalar(-3.2))).value().item(), 0.0);
  EXPECT_DOUBLE_EQ(tanh(t.variable(Tensor<double>::scalar(0))).value().item(), 0.0);
}

TEST(Autodiff, SumGradientIsOnes) {
  Tape<double> t;
  auto x = t.variable(Tensor<double>::vector({0.3, -1.0, 2.0}));
  t.backward(sum(x));
  EXPECT_EQ(t.grad(x), Tensor<double>::vector({1, 1, 1}));
}

TEST(Autodiff, SigmoidGradientAtZero) {
  Tape<double> t;
  auto w = t.variable(Tensor<double>::scalar(0));
  t.backward(sigmoid(w));
  EXPECT_DOUBLE_EQ(t.grad(w).item(), 0.25);
}

TEST(Autodiff, NonScalarLossRejected) {
  Tape<double> t;
  auto x = t.variable(Tensor<double>::vector({1, 2}));
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(Autodiff, BroadcastRules) {
  Tape<double> t;
  auto a = t.variable(Tensor<double>::vector({1, 2, 3}));
  auto s = t.variable(Tensor<double>::scalar(2));
  EXPECT_EQ(mul(a, s).value(), Tensor<double>::vector({2, 4, 6}));
  EXPECT_EQ(add(s, a).value(), Tensor<double>::vector({3, 4, 5}));
  auto b = t.variable(Tensor<double>::vector({1, 2}));
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(matmul(t.variable(Tensor<double>(Shape{2, 3})), t.variable(Tensor<double>(Shape{2, 3}))),
               DimensionError);
}

TEST(Autodiff, SoftmaxExamples) {
  Tape<double> t;
  auto p = softmax(t.variable(Tensor<double>::vector({0, 0}))).value();
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  for (double c : {-700.0, 0.0, 3.5, 800.0}) {
    auto q = softmax(t.variable(Tensor<double>::vector({c, c, c, c}))).value();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(q[i], 0.25, 1e-15);
  }
  auto r = softmax(t.variable(Tensor<double>::vector({std::log(2.0), 0}))).value();
  EXPECT_NEAR(r[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r[1], 1.0 / 3.0, 1e-15);
}

TEST(Autodiff, SoftmaxSumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tape<double> t;
    auto x = random_tensor(Shape{1 + std::size_t(trial % 9)}, rng, -50, 50);
    auto p = softmax(t.variable(x)).value();
    EXPECT_NEAR(sum_values(p), 1.0, 1e-9);
    auto shifted = x;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 17.25;
    auto q = softmax(t.variable(shifted)).value();
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GT(p[i], 0.0);
      EXPECT_NEAR(p[i], q[i], 1e-12);
    }
  }
}

TEST(Autodiff, ActivationRanges) {
  std::mt19937_64 rng(9);
  Tape<double> t;
  auto x = t.variable(random_tensor(Shape{500}, rng, -30, 30));
  auto s = sigmoid(x).value(), h = tanh(x).value(), r = relu(x).value();
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_GT(s[i], 0.0);
    EXPECT_LT(s[i], 1.0);
    EXPECT_GE(h[i], -1.0);
    EXPECT_LE(h[i], 1.0);
    EXPECT_GE(r[i], 0.0);
  }
  auto big = sigmoid(t.variable(Tensor<double>::vector({-1000, 1000}))).value();
  EXPECT_TRUE(std::isfinite(big[0]) && std::isfinite(big[1]));
}

TEST(Autodiff, ReusedNodeAccumulates) {
  Tape<double> t;
  auto x = t.variable(Tensor<double>::scalar(3));
  t.backward(mul(x, x));
  EXPECT_DOUBLE_EQ(t.grad(x).item(), 6.0);
}

TEST(Autodiff, ConstantsGetNoGradient) {
  Tape<double> t;
  auto c = t.constant(Tensor<double>::vector({1, 2}));
  auto x = t.variable(Tensor<double>::vector({3, 4}));
  t.backward(sum(mul(c, x)));
  EXPECT_EQ(t.grad(c), Tensor<double>(Shape{2}));
  EXPECT_EQ(t.grad(x), Tensor<double>::vector({1, 2}));
}

TEST(Autodiff, BackwardTwiceAfterResetIsIdentical) {
  std::mt19937_64 rng(3);
  Tape<double> t;
  auto w = t.variable(random_tensor(Shape{4, 3}, rng));
  auto x = t.variable(random_tensor(Shape{3}, rng));
  auto loss = weighted_sum(t, softmax(tanh(matmul(w, x))));
  t.backward(loss);
  const auto g1 = t.grad(w);
  t.zero_grad();
  t.backward(loss);
  EXPECT_EQ(g1, t.grad(w));
}

TEST_F(OpGrad, Add) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, add(v[0], v[1])); }, {r({5}), r({5})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, add(v[0], v[1])); }, {r({5}), r({})}),
            kOpTol);
}

TEST_F(OpGrad, SubMulScale) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, sub(v[0], v[1])); }, {r({2, 3}), r({2, 3})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, mul(v[0], v[1])); }, {r({4}), r({4})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, mul(v[1], v[0])); }, {r({4}), r({})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, scale(v[0], -2.5)); }, {r({3})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, one_minus(v[0])); }, {r({3})}), kOpTol);
}

TEST_F(OpGrad, Activations) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, sigmoid(v[0])); }, {r({6})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, tanh(v[0])); }, {r({6})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, exp(v[0])); }, {r({6})}), kOpTol);
  // relu is checked away from its kink
  auto x = Tensor<double>::vector({-0.9, -0.3, 0.2, 0.7, 1.0});
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, relu(v[0])); }, {x}), kOpTol);
  auto pos = random_tensor(Shape{5}, rng, 0.1, 1.0);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, log_clamped(v[0], 1e-12)); }, {pos}),
            kOpTol);
}

TEST_F(OpGrad, MatmulAndTranspose) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, matmul(v[0], v[1])); },
                  {r({3, 4}), r({4, 2})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, matmul(v[0], v[1])); },
                  {r({3, 4}), r({4})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, transpose(v[0])); }, {r({2, 5})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, reshape(v[0], Shape{6})); }, {r({2, 3})}),
            kOpTol);
}

TEST_F(OpGrad, Indexing) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, concat({v[0], v[1], v[0]})); },
                  {r({2}), r({3})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, slice(v[0], 1, 3)); }, {r({5})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return mul(at(v[0], 2), at(v[0], 0)); }, {r({4})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, row(v[0], 1)); }, {r({3, 4})}), kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, add_colwise(v[0], v[1])); },
                  {r({3, 4}), r({3})}),
            kOpTol);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, add_rowwise(v[0], v[1])); },
                  {r({3, 4}), r({4})}),
            kOpTol);
}

TEST_F(OpGrad, SumAll) {
  EXPECT_LT(check(
                [](Tape<double>&, const Vs& v) {
                  std::vector<V> xs = {sum(v[0]), sum(mul(v[1], v[1]))};
                  return sum_all(std::span<const V>(xs));
                },
                {r({3}), r({2})}),
            kOpTol);
}

TEST_F(OpGrad, Softmax) {
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, softmax(v[0])); }, {r({7})}), kOpTol);
}

TEST_F(OpGrad, NoisyOrPool) {
  auto p = random_tensor(Shape{4, 3}, rng, 0.05, 0.95);
  EXPECT_LT(check([](Tape<double>& t, const Vs& v) { return weighted_sum(t, noisy_or_pool(v[0])); }, {p}), kOpTol);
}

TEST_F(OpGrad, CrossEntropies) {
  auto p = random_tensor(Shape{5}, rng, 0.05, 0.95);
  auto y = Tensor<double>::vector({1, 0, 0, 1, 0});
  EXPECT_LT(check([y](Tape<double>&, const Vs& v) { return binary_cross_entropy(v[0], y); }, {p}), kOpTol);
  EXPECT_LT(check([](Tape<double>&, const Vs& v) { return nll(softmax(v[0]), 2); }, {r({5})}), kOpTol);
}

TEST(Autodiff, NoisyOrClampKeepsGradientsFinite) {
  Tape<double> t;
  auto p = t.variable(Tensor<double>::matrix({{1.0, 0.2}, {0.5, 0.0}}));
  auto out = noisy_or_pool(p);
  EXPECT_NEAR(out.value()[0], 1.0, 1e-11);
  EXPECT_NEAR(out.value()[1], 0.2, 1e-15);
  t.backward(sum(out));
  auto g = t.grad(p);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(std::isfinite(g[i]));
}

TEST(Autodiff, BceClampsOutOfRange) {
  Tape<double> t;
  auto p = t.variable(Tensor<double>::vector({0.0, 1.0}));
  auto l = binary_cross_entropy(p, Tensor<double>::vector({0, 1}));
  EXPECT_NEAR(l.value().item(), 0.0, 1e-11);
  auto bad = binary_cross_entropy(p, Tensor<double>::vector({1, 0}));
  EXPECT_TRUE(std::isfinite(bad.value().item()));
  EXPECT_NEAR(bad.value().item(), -std::log(1e-12) - std::log(1.0 - (1.0 - 1e-12)), 1e-9);
}
