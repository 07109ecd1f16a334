#include <gtest/gtest.h>

#include <cmath>

#include "dbkd/errors.hpp"
#include "dbkd/grad_check.hpp"
#include "dbkd/losses.hpp"
#include "dbkd/model.hpp"
#include "dbkd/random.hpp"

using namespace dbkd;

namespace {

double div_of(std::vector<double> p, std::vector<double> q, DivergenceKind kind) {
  Tape t;
  const std::size_t m = p.size();
  return bregman_divergence(t.constant({1, m}, std::move(p)), t.constant({1, m}, std::move(q)), kind).item();
}

std::vector<double> random_dist(Rng& rng, std::size_t m) {
  std::vector<double> v(m);
  double s = 0.0;
  for (double& x : v) s += (x = rng.uniform(0.01, 1.0));
  for (double& x : v) x /= s;
  return v;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.channels = 2;
  c.samples = 8;
  c.classes = 2;
  c.layers = {{LayerKind::Conv1d, 3, 3, 1, 1, false, ""},
              {LayerKind::Relu, 0, 0, 1, 1, true, "block1"},
              {LayerKind::GlobalAvgPool, 0, 0, 1, 1, true, "pooled"},
              {LayerKind::Dense, 2, 0, 1, 1, false, ""}};
  return c;
}

Tensor toy_batch(Rng& rng, std::size_t b) {
  std::vector<double> v(b * 2 * 8);
  for (double& x : v) x = rng.normal();
  return Tensor({b, 2, 8}, v);
}

}  // namespace

TEST(Softmax, Examples) {
  Tape t;
  for (double temp : {0.5, 1.0, 4.0}) {
    const auto p = softmax_temperature(t.constant({1, 2}, {0, 0}), temp).to_tensor().data;
    EXPECT_DOUBLE_EQ(p[0], 0.5);
  }
  const auto p = softmax_temperature(t.constant({1, 2}, {1, 0}), 1.0).to_tensor().data;
  EXPECT_NEAR(p[0], 0.73106, 5e-6);
  EXPECT_NEAR(p[1], 0.26894, 5e-6);
  EXPECT_THROW(softmax_temperature(t.constant({1, 2}, {1, 0}), 0.0), ParameterError);
  EXPECT_THROW(softmax_temperature(t.constant({1, 2}, {1, 0}), -1.0), ParameterError);
}

TEST(CrossEntropy, Examples) {
  Tape t;
  const std::vector<int> one{1};
  EXPECT_NEAR(cross_entropy(t.constant({1, 2}, {0, 1}), one).item(), 0.0, 1e-6);
  EXPECT_NEAR(cross_entropy(t.constant({1, 2}, {0.5, 0.5}), one).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(cross_entropy(t.constant({1, 2}, {0.5, 0.5}), one).item(), 0.69315, 5e-6);
  EXPECT_THROW(cross_entropy(t.constant({1, 2}, {0.5, 0.5}), std::vector<int>{2}), DataError);
}

TEST(Bregman, Examples) {
  for (auto kind : {DivergenceKind::MSE, DivergenceKind::KL, DivergenceKind::Logistic}) {
    EXPECT_NEAR(div_of({0.3, 0.7}, {0.3, 0.7}, kind), 0.0, 1e-9);
  }
  EXPECT_NEAR(div_of({1, 0}, {0, 1}, DivergenceKind::MSE), 2.0, 1e-12);
  EXPECT_NEAR(div_of({0.5, 0.5}, {0.25, 0.75}, DivergenceKind::KL), 0.14384, 5e-6);
  EXPECT_NEAR(div_of({0.8}, {0.5}, DivergenceKind::Logistic), 0.19274, 5e-6);
  EXPECT_THROW(parse_divergence("hinge"), ParameterError);
  EXPECT_EQ(parse_divergence("kl"), DivergenceKind::KL);
  EXPECT_EQ(to_string(DivergenceKind::Logistic), "logistic");
}

TEST(Bregman, AxiomsOnRandomPairs) {
  Rng rng(42);
  bool kl_asym = false, log_asym = false;
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 2 + rng.index(4);
    const auto p = random_dist(rng, m), q = random_dist(rng, m);
    for (auto kind : {DivergenceKind::MSE, DivergenceKind::KL, DivergenceKind::Logistic}) {
      EXPECT_GE(div_of(p, q, kind), 0.0);
      EXPECT_NEAR(div_of(p, p, kind), 0.0, 1e-9);
    }
    EXPECT_EQ(div_of(p, q, DivergenceKind::MSE), div_of(q, p, DivergenceKind::MSE));
    kl_asym |= std::abs(div_of(p, q, DivergenceKind::KL) - div_of(q, p, DivergenceKind::KL)) > 1e-3;
    log_asym |= std::abs(div_of(p, q, DivergenceKind::Logistic) - div_of(q, p, DivergenceKind::Logistic)) > 1e-3;
  }
  EXPECT_TRUE(kl_asym);
  EXPECT_TRUE(log_asym);
}

TEST(Bregman, SaturatedInputsStayFinite) {
  EXPECT_TRUE(std::isfinite(div_of({1, 0}, {0, 1}, DivergenceKind::KL)));
  EXPECT_TRUE(std::isfinite(div_of({1, 0}, {0, 1}, DivergenceKind::Logistic)));
}

TEST(FeatureDifference, Examples) {
  Tape t;
  Taps a{{"f", t.constant({1, 2}, {1, 1})}}, b{{"f", t.constant({1, 2}, {0, 0})}};
  EXPECT_DOUBLE_EQ(feature_difference(a, b, {{"f", 0.5}}).item(), 1.0);
  EXPECT_DOUBLE_EQ(feature_difference(a, a, {{"f", 0.5}}).item(), 0.0);
  EXPECT_DOUBLE_EQ(feature_difference(a, b, {{"f", 0.0}}).item(), 0.0);
}

TEST(FeatureDifference, MismatchesAreContractErrors) {
  Tape t;
  Taps a{{"f", t.constant({1, 2}, {1, 1})}};
  Taps renamed{{"g", t.constant({1, 2}, {1, 1})}};
  Taps reshaped{{"f", t.constant({1, 3}, {1, 1, 1})}};
  EXPECT_THROW(feature_difference(a, renamed, {{"f", 1.0}}), ContractError);
  EXPECT_THROW(feature_difference(a, reshaped, {{"f", 1.0}}), ContractError);
  EXPECT_THROW(feature_difference(a, a, {}), ContractError);
  EXPECT_THROW(feature_difference(a, Taps{}, {{"f", 1.0}}), ContractError);
}

TEST(FeatureWeights, UniformOverTaps) {
  const auto w = uniform_feature_weights(toy_config());
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w.at("block1"), 0.5);
  EXPECT_DOUBLE_EQ(w.at("pooled"), 0.5);
}

TEST(JointLoss, IdenticalModelsReduceToPrediction) {
  Rng rng(3);
  Model m = build_model(toy_config(), 9);
  Model twin = m;
  const Tensor x = toy_batch(rng, 4);
  const std::vector<int> y{0, 1, 1, 0};
  Tape ta, tb;
  const auto fa = forward_with_taps(m, ta, x), fb = forward_with_taps(twin, tb, x);
  const auto l = joint_loss(Role::Cus, fa, fb, y, {});
  EXPECT_EQ(l.dif, 0.0);
  EXPECT_NEAR(l.div, 0.0, 1e-12);
  EXPECT_NEAR(l.total.item(), l.pred, 1e-12);
}

TEST(JointLoss, EqualsSumOfIndependentTerms) {
  Rng rng(4);
  Model a = build_model(toy_config(), 1), b = build_model(toy_config(), 2);
  const Tensor x = toy_batch(rng, 5);
  const std::vector<int> y{0, 1, 1, 0, 1};
  JointLossOptions opts;
  opts.dif_weight = 0.7;
  opts.div_weight = 1.3;
  Tape ta, tb;
  const auto fa = forward_with_taps(a, ta, x), fb = forward_with_taps(b, tb, x);
  const auto l = joint_loss(Role::Pool, fa, fb, y, opts);

  Tape t;
  Var la = t.constant(fa.logits.to_tensor()), lb = t.constant(fb.logits.to_tensor());
  const double pred = cross_entropy(softmax_temperature(la, 1.0), y).item();
  const double div = bregman_divergence(softmax_temperature(lb, 4.0), softmax_temperature(la, 4.0),
                                        DivergenceKind::KL).item();
  Taps xa, xb;
  for (const auto& [n, v] : fa.taps) xa.emplace_back(n, t.constant(v.to_tensor()));
  for (const auto& [n, v] : fb.taps) xb.emplace_back(n, t.constant(v.to_tensor()));
  const double dif = feature_difference(xa, xb, uniform_feature_weights(toy_config())).item();
  EXPECT_NEAR(l.total.item(), pred + 0.7 * dif + 1.3 * div, 1e-12);
  EXPECT_NEAR(l.pred, pred, 1e-12);
}

TEST(JointLoss, ZeroFeatureWeightsDropTheFeatureTerm) {
  Rng rng(5);
  Model a = build_model(toy_config(), 1), b = build_model(toy_config(), 2);
  const Tensor x = toy_batch(rng, 3);
  const std::vector<int> y{0, 1, 0};
  JointLossOptions opts;
  opts.feature_weights = {{"block1", 0.0}, {"pooled", 0.0}};
  Tape ta, tb;
  const auto fa = forward_with_taps(a, ta, x), fb = forward_with_taps(b, tb, x);
  const auto l = joint_loss(Role::Cus, fa, fb, y, opts);
  EXPECT_EQ(l.dif, 0.0);
  EXPECT_NEAR(l.total.item(), l.pred + l.div, 1e-12);
}

TEST(JointLoss, TemperatureSquaredScalesDivergence) {
  Rng rng(6);
  Model a = build_model(toy_config(), 1), b = build_model(toy_config(), 2);
  const Tensor x = toy_batch(rng, 3);
  const std::vector<int> y{0, 1, 0};
  JointLossOptions opts;
  opts.dif_weight = 0.0;
  Tape ta, tb;
  const auto fa = forward_with_taps(a, ta, x), fb = forward_with_taps(b, tb, x);
  const double plain = joint_loss(Role::Cus, fa, fb, y, opts).total.item();
  opts.temperature_squared = true;
  const auto sq = joint_loss(Role::Cus, fa, fb, y, opts);
  EXPECT_NEAR(sq.total.item() - sq.pred, 16.0 * (plain - sq.pred), 1e-12);
}

TEST(JointLoss, GradientReachesOnlyTheOwnModel) {
  Rng rng(7);
  Model a = build_model(toy_config(), 1), b = build_model(toy_config(), 2);
  const Tensor x = toy_batch(rng, 3);
  const std::vector<int> y{0, 1, 0};
  a.zero_grad();
  b.zero_grad();
  Tape ta, tb;
  const auto fa = forward_with_taps(a, ta, x), fb = forward_with_taps(b, tb, x);
  ta.backward(joint_loss(Role::Pool, fa, fb, y, {}).total);
  for (const auto& p : b.params) {
    if (!p.grad) continue;
    for (double g : *p.grad) EXPECT_EQ(g, 0.0);
  }
  bool any = false;
  for (const auto& p : a.params)
    for (double g : *p.grad) any |= g != 0.0;
  EXPECT_TRUE(any);
}

TEST(JointLoss, GradCheckBothRolesAllKinds) {
  Rng rng(8);
  Model a = build_model(toy_config(), 11), b = build_model(toy_config(), 12);
  const Tensor x = toy_batch(rng, 4);
  const std::vector<int> y{1, 0, 1, 0};
  for (auto kind : {DivergenceKind::MSE, DivergenceKind::KL, DivergenceKind::Logistic}) {
    for (auto role : {Role::Pool, Role::Cus}) {
      JointLossOptions opts;
      opts.divergence = kind;
      opts.dif_weight = 0.3;
      std::vector<Tensor*> params;
      for (auto& p : a.params) params.push_back(&p);
      const double err = grad_check(
          [&](Tape& t) {
            Tape tb;
            const auto fb = forward_with_taps(b, tb, x, false);
            return joint_loss(role, forward_with_taps(a, t, x), fb, y, opts).total;
          },
          params);
      EXPECT_LT(err, 1e-5) << to_string(kind) << " " << to_string(role);
    }
  }
}

TEST(Losses, GradCheckSoftmaxCrossEntropy) {
  Rng rng(9);
  std::vector<double> z(12);
  for (double& v : z) v = rng.normal() * 2.0;
  const std::vector<int> y{0, 2, 1, 2};
  const double err = grad_check(
      [&](Tape&, Var v) { return cross_entropy(softmax_temperature(v, 1.0), y); }, Tensor({4, 3}, z, true));
  EXPECT_LT(err, 1e-6);
}
