#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "autograd.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "tensor.hpp"

using namespace wvad;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({r, c});
  for (double& v : t.data()) v = n(rng);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(shape_product(t.shape()), t.size());
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(shape_product({0, 3}), DimensionError);
  Tensor bad = Tensor::vector({1.0, std::nan("")});
  EXPECT_FALSE(bad.all_finite());
}

TEST(DwsConv1d, IdentityKernel) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(3, 1, {1, 2, 3}));
  Var y = ops::dws_conv1d(x, tape.constant(Tensor::matrix(1, 3, {0, 1, 0})), tape.constant(Tensor::matrix(1, 1, {1})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{1, 2, 3}));
}

TEST(DwsConv1d, ReplicatePaddingBoxKernel) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(3, 1, {1, 2, 3}));
  Var y = ops::dws_conv1d(x, tape.constant(Tensor::matrix(1, 3, {1, 1, 1})), tape.constant(Tensor::matrix(1, 1, {1})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{4, 6, 8}));
}

TEST(DwsConv1d, ZeroPointKernelGivesZeros) {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.constant(random_matrix(6, 3, rng));
  Var y = ops::dws_conv1d(x, tape.constant(random_matrix(3, 3, rng)), tape.constant(Tensor({3, 2}, 0.0)));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(DwsConv1d, ChannelMismatchIsDimensionError) {
  Tape tape;
  Var x = tape.constant(Tensor({4, 2}, 1.0));
  EXPECT_THROW(ops::dws_conv1d(x, tape.constant(Tensor({3, 3}, 1.0)), tape.constant(Tensor({2, 2}, 1.0))),
               DimensionError);
  EXPECT_THROW(ops::dws_conv1d(x, tape.constant(Tensor({2, 3}, 1.0)), tape.constant(Tensor({3, 2}, 1.0))),
               DimensionError);
}

TEST(DwsConv1d, Locality) {
  std::mt19937_64 rng(2);
  const std::size_t T = 9, C = 2, W = 5;
  const Tensor dk = random_matrix(C, W, rng), pk = random_matrix(C, 3, rng);
  Tensor x = random_matrix(T, C, rng);
  auto run = [&](const Tensor& in) {
    Tape tape;
    return ops::dws_conv1d(tape.constant(in), tape.constant(dk), tape.constant(pk)).value();
  };
  const Tensor base = run(x);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor xp = x;
    xp.at(t, 0) += 1.0;
    const Tensor moved = run(xp);
    for (std::size_t r = 0; r < T; ++r) {
      const bool changed = moved.at(r, 0) != base.at(r, 0) || moved.at(r, 1) != base.at(r, 1);
      const std::size_t dist = r > t ? r - t : t - r;
      if (dist > W / 2) EXPECT_FALSE(changed) << "row " << r << " moved by input row " << t;
    }
  }
}

TEST(TopkMean, SortAndAverage) {
  Tape tape;
  Var s = tape.constant(Tensor::vector({0.9, 0.1, 0.8, 0.7, 0.2}));
  EXPECT_NEAR(ops::topk_mean(s, 3).value().item(), 0.8, 1e-15);
}

TEST(TopkMean, KEqualsTIsMean) {
  Tape tape;
  Var s = tape.constant(Tensor::vector({0.3, 0.9, 0.1, 0.4}));
  EXPECT_DOUBLE_EQ(ops::topk_mean(s, 4).value().item(), ops::mean(s).value().item());
}

TEST(TopkMean, TieBreakGradient) {
  Tape tape;
  Var s = tape.leaf(Tensor::vector({0.5, 0.5, 0.5}));
  Var g = ops::topk_mean(s, 2);
  EXPECT_EQ(g.value().item(), 0.5);
  tape.backward(g);
  EXPECT_EQ(s.grad().values(), (std::vector<double>{0.5, 0.5, 0.0}));
}

TEST(TopkMean, KTooLargeIsArgumentError) {
  Tape tape;
  EXPECT_THROW(ops::topk_mean(tape.constant(Tensor::vector({1, 2})), 3), ArgumentError);
  EXPECT_THROW(ops::topk_mean(tape.constant(Tensor::vector({1, 2})), 0), ArgumentError);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(3);
  Tape tape;
  Var p = ops::softmax_rows(tape.constant(random_matrix(5, 7, rng)));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += p.value().at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Sigmoid, StaysInOpenInterval) {
  Tape tape;
  Var y = ops::sigmoid(tape.constant(Tensor::vector({-30.0, -1.0, 0.0, 2.0, 30.0})));
  for (double v : y.value().data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(y.value()[2], 0.5);
}

TEST(Tape, BackwardVisitsReverseTopologicalOrder) {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(2.0));
  Var b = ops::mul(a, a);
  Var c = ops::exp(b);
  Var d = ops::add(c, b);
  tape.backward(d);
  const auto& order = tape.last_backward_order();
  ASSERT_FALSE(order.empty());
  std::vector<std::size_t> pos(tape.size(), SIZE_MAX);
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (std::size_t id : order)
    for (std::size_t in : tape.inputs(id))
      if (pos[in] != SIZE_MAX) EXPECT_LT(pos[id], pos[in]) << "node " << id << " before its input " << in;
  EXPECT_NEAR(a.grad().item(), (std::exp(4.0) + 1) * 4.0, 1e-9);
}

TEST(Tape, SharedLeafAccumulatesOnce) {
  Tape tape;
  Var a = tape.leaf(Tensor::scalar(3.0));
  Var y = ops::add(ops::scale(a, 2.0), ops::scale(a, 5.0));
  tape.backward(y);
  EXPECT_EQ(a.grad().item(), 7.0);
  tape.backward(y);
  EXPECT_EQ(a.grad().item(), 14.0);  // leaves accumulate across passes until zero_grad
  tape.zero_grad();
  tape.backward(y);
  EXPECT_EQ(a.grad().item(), 7.0);
}

TEST(GradCheck, SquareAtThree) {
  auto f = [](Tape&, std::span<const Var> p) { return ops::mul(p[0], p[0]); };
  GradCheckReport r = grad_check(f, {Tensor::scalar(3.0)}, {"x"});
  ASSERT_EQ(r.params.size(), 1u);
  EXPECT_DOUBLE_EQ(r.params[0].analytic, 6.0);
  EXPECT_NEAR(r.params[0].numeric, 6.0, 1e-6);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  auto f = [](Tape& tape, std::span<const Var>) { return tape.constant(Tensor::scalar(4.2)); };
  GradCheckReport r = grad_check(f, {Tensor::vector({1.0, 2.0})}, {"x"});
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.params[0].analytic, 0.0);
  EXPECT_EQ(r.params[0].numeric, 0.0);
}

TEST(GradCheck, NonFinitePerturbationReportsLocation) {
  // log(x) at x = 5e-6: x - h is negative, so the perturbed value is NaN.
  auto f = [](Tape&, std::span<const Var> p) { return ops::sum(ops::log(p[0])); };
  GradCheckReport r = grad_check(f, {Tensor::vector({1.0, 5e-6})}, {"x"});
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.failure.find("x[1]"), std::string::npos) << r.failure;
}

TEST(GradCheck, WrongGradientIsCaught) {
  auto f = [](Tape& tape, std::span<const Var> p) {
    const Tensor& x = p[0].value();
    Tensor y = x;
    for (double& v : y.data()) v = v * v;
    const std::size_t in = p[0].id();
    Var out = tape.record(std::move(y), {in}, [in](Tape& t, std::size_t self) {
      Tensor& g = t.grad_slot(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += t.out_grad(self)[i] * 3.0 * t.value(in)[i];
    });
    return ops::sum(out);
  };
  GradCheckReport r = grad_check(f, {Tensor::vector({1.0, -2.0})}, {"x"});
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 1e-4);
}
