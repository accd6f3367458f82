// Copyright 2026 The molalign Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molalign/autograd.h"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "molalign/grad_suite.h"
#include "molalign/gradcheck.h"
#include "molalign/rng.h"

namespace molalign {
namespace {

using namespace ops;

Tensor random_tensor(Shape shape, Rng &rng) {
  Tensor t(std::move(shape));
  for (auto &x : t.data()) x = rng.normal();
  return t;
}

void expect_tensor_near(const Tensor &a, const Tensor &b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(OpsTest, Matmul) {
  const Var a = Var::constant(Tensor::matrix({{1, 2}}));
  const Var b = Var::constant(Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(matmul(a, b).value(), Tensor::matrix({{11}}));
  EXPECT_THROW(matmul(a, a), TensorError);
}

TEST(OpsTest, RowSoftmaxOfZerosIsUniform) {
  const Var s = row_softmax(Var::constant(Tensor::matrix({{0, 0}})));
  EXPECT_EQ(s.value(), Tensor::matrix({{0.5, 0.5}}));
}

TEST(OpsTest, RowSoftmaxRowsSumToOne) {
  Rng rng(3);
  const Var s = row_softmax(Var::constant(random_tensor({4, 6}, rng)));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (double v : s.value().row(r)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-15);
  }
}

TEST(OpsTest, PairwiseSqDists) {
  const Var d = pairwise_sq_dists(Var::constant(Tensor::matrix({{0, 0}})),
                                  Var::constant(Tensor::matrix({{3, 4}})));
  EXPECT_DOUBLE_EQ(d.value()(0, 0), 25.0);
}

TEST(OpsTest, L2NormalizeGuardsZeroRows) {
  std::vector<bool> guarded;
  const Var n = l2_normalize_rows(Var::constant(Tensor::matrix({{3, 4}, {0, 0}})), &guarded);
  EXPECT_DOUBLE_EQ(n.value()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n.value()(0, 1), 0.8);
  EXPECT_EQ(n.value()(1, 0), 0.0);
  EXPECT_EQ(guarded, (std::vector<bool>{false, true}));
}

TEST(OpsTest, BroadcastRowVector) {
  const Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var b = Var::constant(Tensor::vector({10, 20}));
  EXPECT_EQ(add(a, b).value(), Tensor::matrix({{11, 22}, {13, 24}}));
  EXPECT_THROW(add(a, Var::constant(Tensor::vector({1, 2, 3}))), TensorError);
}

TEST(OpsTest, AxisReductions) {
  const Var a = Var::constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(sum(a, 0).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(sum(a, 1).value(), Tensor::vector({3, 7}));
  EXPECT_EQ(mean(a).value().item(), 2.5);
}

TEST(OpsTest, NonFiniteOutputThrows) {
  try {
    (void)log(Var::constant(Tensor::vector({0.0})));
    FAIL() << "expected throw";
  } catch (const TensorError &e) {
    EXPECT_EQ(e.kind(), TensorErrorKind::kNonFiniteValue);
  }
}

TEST(OpsTest, GatherOutOfRange) {
  const std::vector<std::size_t> rows{2};
  EXPECT_THROW(gather_rows(Var::constant(Tensor({2, 2})), rows), TensorError);
}

TEST(BackwardTest, SumOfSquares) {
  const Var x = Var::leaf(Tensor::vector({1, 2, 3}));
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), Tensor::vector({2, 4, 6}));
}

TEST(BackwardTest, ConstantLossGivesZeroGrad) {
  const Var x = Var::leaf(Tensor::vector({1, 2}));
  const Var c = Var::constant(Tensor::scalar(5.0));
  backward(add(c, sum(scale(x, 0.0))));
  EXPECT_EQ(x.grad(), Tensor::vector({0, 0}));
}

TEST(BackwardTest, RejectsNonScalarAndSecondCall) {
  const Var x = Var::leaf(Tensor::vector({1, 2}));
  try {
    backward(x);
    FAIL();
  } catch (const TensorError &e) {
    EXPECT_EQ(e.kind(), TensorErrorKind::kNonScalarLoss);
  }
  const Var loss = sum(x);
  backward(loss);
  try {
    backward(loss);
    FAIL();
  } catch (const TensorError &e) {
    EXPECT_EQ(e.kind(), TensorErrorKind::kBackwardTwice);
  }
}

TEST(BackwardTest, SharedSubgraphAccumulates) {
  const Var x = Var::leaf(Tensor::scalar(2.0));
  const Var y = mul(x, x);
  backward(add(y, y));  // 2x^2
  EXPECT_DOUBLE_EQ(x.grad().item(), 8.0);
}

TEST(BackwardTest, Linearity) {
  Rng rng(5);
  const Tensor x0 = random_tensor({3, 4}, rng);
  const auto f = [](const Var &x) { return sum(tanh(matmul(x, transpose(x)))); };
  const auto g = [](const Var &x) { return mean(row_log_softmax(x)); };
  const double a = 0.7, b = -1.3;

  const Var x1 = Var::leaf(x0), x2 = Var::leaf(x0), x3 = Var::leaf(x0);
  backward(f(x1));
  backward(g(x2));
  backward(add(scale(f(x3), a), scale(g(x3), b)));
  Tensor expected(x0.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) expected[i] = a * x1.grad()[i] + b * x2.grad()[i];
  expect_tensor_near(x3.grad(), expected, 1e-13);
}

TEST(GradCheckTest, SquareAtThree) {
  const auto r = finite_difference_check(
      [](std::span<const Var> p) { return sum(square(p[0])); },
      std::vector<Tensor>{Tensor::scalar(3.0)});
  EXPECT_LE(r.max_rel_error, 1e-8);
  EXPECT_NEAR(r.analytic, 6.0, 1e-15);
}

TEST(GradCheckTest, ConstantFunction) {
  const auto r = finite_difference_check(
      [](std::span<const Var> p) { return add_scalar(scale(sum(p[0]), 0.0), 4.0); },
      std::vector<Tensor>{Tensor::vector({1, 2})});
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheckTest, RejectsBadEps) {
  const auto f = [](std::span<const Var> p) { return sum(p[0]); };
  const std::vector<Tensor> params{Tensor::scalar(1.0)};
  EXPECT_THROW(finite_difference_check(f, params, 0.0), std::invalid_argument);
  EXPECT_THROW(finite_difference_check(f, params, 0.1), std::invalid_argument);
}

TEST(GradCheckTest, DetectsWrongGradient) {
  // relu at exactly zero has a kink; the one-sided analytic value disagrees
  // with the symmetric difference.
  const auto r = finite_difference_check(
      [](std::span<const Var> p) { return sum(relu(p[0])); },
      std::vector<Tensor>{Tensor::scalar(0.0)});
  EXPECT_GT(r.max_rel_error, 1e-2);
}

TEST(GradCheckTest, OpsPassAtRandomPoints) {
  Rng rng(9);
  const std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                                   random_tensor({2, 4}, rng)};
  const auto f = [](std::span<const Var> p) {
    const Var h = tanh(matmul(p[0], p[1]));
    const Var n = l2_normalize_rows(p[0]);
    const Var d = pairwise_sq_dists(n, p[2]);
    return add(mean(row_log_softmax(h)), scale(mean(exp(scale(d, -0.5))), 2.0));
  };
  EXPECT_LE(finite_difference_check(f, params).max_rel_error, 1e-6);
}

TEST(GradSuiteTest, EveryEntryPasses) {
  const auto suite = run_gradient_suite(0);
  ASSERT_FALSE(suite.empty());
  for (const auto &e : suite) {
    EXPECT_TRUE(e.passed) << e.name << " max_rel_error=" << e.result.max_rel_error;
    EXPECT_GT(e.result.coordinates, 0u) << e.name;
  }
}

}  // namespace
}  // namespace molalign
