#include <gtest/gtest.h>

#include <cmath>

#include "dbkd/errors.hpp"
#include "dbkd/grad_check.hpp"
#include "dbkd/random.hpp"
#include "dbkd/tensor.hpp"
#include "oracles.hpp"

using namespace dbkd;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

std::vector<double> values(Var v) { return {v.value().begin(), v.value().end()}; }

}  // namespace

TEST(Tensor, RejectsBadShapesAndNonFinite) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
  EXPECT_THROW(Tensor({2}, {1, 2}).item(), ContractError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(3.5).item(), 3.5);
}

TEST(Matmul, Examples) {
  Tape t;
  Var a = t.constant({2, 2}, {1, 2, 3, 4});
  Var id = t.constant({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(matmul(id, a)), (std::vector<double>{1, 2, 3, 4}));
  Var b = t.constant({2, 1}, {5, 6});
  Var c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{17, 39}));
  Var z = t.constant(Tensor::zeros({2, 2}));
  EXPECT_EQ(values(matmul(z, a)), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_THROW(matmul(a, t.constant({3, 1}, {1, 2, 3})), DimensionError);
}

TEST(Matmul, MatchesLoopOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 1 + rng.index(5), k = 1 + rng.index(5), n = 1 + rng.index(5);
    Tensor a = random_tensor(rng, {m, k}), b = random_tensor(rng, {k, n});
    Tape t;
    const auto got = values(matmul(t.constant(a), t.constant(b)));
    const auto want = oracle::matmul(a.data, b.data, m, k, n);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv1d, Examples) {
  Tape t;
  Var x = t.constant({1, 3}, {1, 2, 3});
  EXPECT_EQ(values(conv1d(x, t.constant({1, 1, 1}, {1}), 1)), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(values(conv1d(x, t.constant({1, 1, 2}, {1, 1}), 1)), (std::vector<double>{3, 5}));
  Var x4 = t.constant({1, 4}, {1, 2, 3, 4});
  EXPECT_EQ(values(conv1d(x4, t.constant({1, 1, 2}, {1, 1}), 2)), (std::vector<double>{3, 7}));
  EXPECT_THROW(conv1d(x, t.constant({1, 1, 4}, {1, 1, 1, 1}), 1), DimensionError);
}

TEST(Conv1d, MatchesSlidingDotOracle) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t groups = 1 + rng.index(2);
    const std::size_t c = groups * (1 + rng.index(2)), o = groups * (1 + rng.index(2));
    const std::size_t k = 1 + rng.index(3), l = k + rng.index(6), stride = 1 + rng.index(3);
    Tensor x = random_tensor(rng, {2, c, l}), w = random_tensor(rng, {o, c / groups, k});
    Tape t;
    const auto got = values(conv1d(t.constant(x), t.constant(w), stride, groups));
    const auto want = oracle::conv1d(x.data, w.data, 2, c, l, o, k, stride, groups);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Backward, Examples) {
  Tensor x({3}, {1, -2, 3}, true);
  {
    Tape t;
    t.backward(sum(t.parameter(x)));
    EXPECT_EQ(*x.grad, (std::vector<double>{1, 1, 1}));
  }
  x.zero_grad();
  {
    Tape t;
    t.backward(sum(square(t.parameter(x))));
    EXPECT_EQ(*x.grad, (std::vector<double>{2, -4, 6}));
  }
  Tape t;
  EXPECT_THROW(t.backward(t.parameter(x)), ContractError);
}

TEST(Backward, TwoLayerReluNetMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor x = random_tensor(rng, {4, 3});
  Tensor w1 = random_tensor(rng, {3, 5}), w2 = random_tensor(rng, {5, 2});
  x.requires_grad = false;
  const double err = grad_check(
      [&](Tape& t) {
        Var h = relu(matmul(t.constant(x), t.parameter(w1)));
        return mean(square(matmul(h, t.parameter(w2))));
      },
      {&w1, &w2});
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ExactForLinear) {
  Rng rng(1);
  const double err = grad_check([](Tape&, Var x) { return sum(x); }, random_tensor(rng, {7}));
  EXPECT_LE(err, 1e-10);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately broken op: forward x^2, backward claims 3x.
  Rng rng(2);
  const double err = grad_check(
      [](Tape& t, Var x) {
        const std::size_t xid = x.id();
        std::vector<double> v(x.value().begin(), x.value().end());
        for (double& e : v) e *= e;
        Var y = t.record("bad_square", x.shape(), v, {x}, [xid](Tape& tp, std::size_t id) {
          std::vector<double> g(tp.grad_of(id).size());
          for (std::size_t i = 0; i < g.size(); ++i) g[i] = 3.0 * tp.value_of(xid)[i] * tp.grad_of(id)[i];
          tp.accumulate(xid, g);
        });
        return sum(y);
      },
      random_tensor(rng, {4}, 0.5, 1.5));
  EXPECT_GT(err, 0.1);
}

TEST(Primitives, SoftmaxRowsAndErrors) {
  Tape t;
  Var z = t.constant({1, 2}, {1, 0});
  const auto p = values(softmax_rows(z, 1.0));
  EXPECT_NEAR(p[0], 0.7310585786300049, 1e-12);
  EXPECT_THROW(softmax_rows(z, 0.0), ParameterError);
  EXPECT_THROW(pick(z, std::vector<int>{2}), DataError);
  EXPECT_THROW(log(t.constant({1}, {0.0})), NumericError);
}

TEST(Primitives, ReluSubgradientAtZeroIsZero) {
  Tensor x({3}, {-1, 0, 2}, true);
  Tape t;
  t.backward(sum(relu(t.parameter(x))));
  EXPECT_EQ(*x.grad, (std::vector<double>{0, 0, 1}));
}

TEST(Primitives, ClampBlocksGradientOutsideRange) {
  Tensor x({3}, {-1, 0.5, 2}, true);
  Tape t;
  t.backward(sum(clamp(t.parameter(x), 0.0, 1.0)));
  EXPECT_EQ(*x.grad, (std::vector<double>{0, 1, 0}));
}

TEST(Primitives, DetachStopsGradient) {
  Tensor x({2}, {1, 2}, true);
  Tape a, b;
  Var xa = a.parameter(x);
  Var d = detach(square(xa), b);
  EXPECT_FALSE(b.needs_grad(d));
  EXPECT_EQ(values(d), (std::vector<double>{1, 4}));
}

TEST(Primitives, ChannelCorrelationOfStandardizedRowsIsPearson) {
  Tape t;
  // Two standardized channels: identical, and negated.
  Var x = t.constant({1, 2, 4}, {1, -1, 1, -1, -1, 1, -1, 1});
  const auto c = values(channel_correlation(x));
  EXPECT_EQ(c, (std::vector<double>{1, -1, -1, 1}));
}

// 100 random shapes per primitive.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, CentralDifferencesAgree) {
  Rng rng(1000 + GetParam());
  const std::size_t m = 1 + rng.index(4), n = 1 + rng.index(4), k = 1 + rng.index(4);
  Tensor a = random_tensor(rng, {m, n}), b = random_tensor(rng, {m, n});
  Tensor w = random_tensor(rng, {n, k});
  Tensor pos = random_tensor(rng, {m, n}, 0.5, 2.0);
  const std::size_t c = 1 + rng.index(3), kk = 1 + rng.index(3), l = kk + rng.index(5), stride = 1 + rng.index(2);
  Tensor cx = random_tensor(rng, {2, c, l}), ck = random_tensor(rng, {2, c, kk});
  Tensor cb = random_tensor(rng, {2});
  Tensor weights = random_tensor(rng, {m, n});
  const double temp = 0.5 + rng.uniform();
  const auto weighted = [&](Tape& t, Var v) { return sum(mul(v, t.constant(weights))); };

  const std::vector<std::pair<std::string, std::pair<LossBuilder, std::vector<Tensor*>>>> all = {
      {"add", {[&](Tape& t) { return weighted(t, add(t.parameter(a), t.parameter(b))); }, {&a, &b}}},
      {"mul", {[&](Tape& t) { return weighted(t, mul(t.parameter(a), t.parameter(b))); }, {&a, &b}}},
      {"matmul", {[&](Tape& t) { return sum(square(matmul(t.parameter(a), t.parameter(w)))); }, {&a, &w}}},
      {"relu", {[&](Tape& t) { return weighted(t, relu(t.parameter(a))); }, {&a}}},
      {"mean", {[&](Tape& t) { return mean(square(t.parameter(a))); }, {&a}}},
      {"log", {[&](Tape& t) { return weighted(t, log(t.parameter(pos))); }, {&pos}}},
      {"exp", {[&](Tape& t) { return weighted(t, exp(t.parameter(a))); }, {&a}}},
      {"softmax", {[&](Tape& t) { return weighted(t, softmax_rows(t.parameter(a), temp)); }, {&a}}},
      {"conv1d",
       {[&](Tape& t) {
          return sum(square(add_bias(conv1d(t.parameter(cx), t.parameter(ck), stride), t.parameter(cb))));
        },
        {&cx, &ck, &cb}}},
      {"correlation", {[&](Tape& t) { return sum(square(channel_correlation(t.parameter(cx)))); }, {&cx}}},
  };
  for (const auto& [name, fc] : all) {
    const double err = grad_check(fc.first, fc.second);
    EXPECT_LT(err, 1e-5) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradients, ::testing::Range(0, 100));

TEST(BackwardProperties, LinearityOfSumOfLosses) {
  Rng rng(21);
  Tensor a = random_tensor(rng, {3, 4}), w = random_tensor(rng, {4, 2});
  const auto l1 = [&](Tape& t) { return sum(square(matmul(t.parameter(a), t.parameter(w)))); };
  const auto l2 = [&](Tape& t) { return mean(exp(t.parameter(a))); };
  const auto grads = [&](const std::function<Var(Tape&)>& f) {
    a.zero_grad();
    w.zero_grad();
    Tape t;
    t.backward(f(t));
    return std::pair{*a.grad, *w.grad};
  };
  const auto g1 = grads(l1), g2 = grads(l2);
  const auto g12 = grads([&](Tape& t) { return add(l1(t), l2(t)); });
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(g12.first[i], g1.first[i] + g2.first[i], 1e-12);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(g12.second[i], g1.second[i] + g2.second[i], 1e-12);
}

TEST(BackwardProperties, DeterministicReplay) {
  const auto run = [] {
    Rng rng(77);
    Tensor x = random_tensor(rng, {2, 3, 8}), k = random_tensor(rng, {4, 3, 3});
    Tape t;
    t.backward(mean(relu(conv1d(t.parameter(x), t.parameter(k), 2))));
    return std::pair{*x.grad, *k.grad};
  };
  EXPECT_EQ(run(), run());
}
