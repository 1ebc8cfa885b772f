#include "robustlaw/concentration.hpp"
#include "robustlaw/function_class.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace robustlaw;

namespace {

DataModel mixture(int r) {
  DataModel m;
  m.d = 4;
  m.r = r;
  m.weights = Vec::Constant(r, 1.0 / r);
  m.means = Mat::Zero(r, 4);
  for (int k = 0; k < r; ++k) m.means(k, k % 4) = 2.0;
  m.law = LabelLaw::Classification;
  m.mean_map = MeanMap::SoftmaxFloor;
  m.K = 3;
  m.classes = 3;
  m.alpha = 0.1;
  m.seed = 3;
  m.validate();
  return m;
}

TailContext context(int r) {
  TailContext ctx(LossSpec::neg_entropy(3, 1.0, 0.1), mixture(r));
  FunctionClass cls;
  cls.arch = {4, 6, 3};
  cls.layer_bound = {0.5, 0.5};
  cls.head = Head::Softmax;
  const Network net(cls, init_params(cls, 1, 0));
  ctx.f = net.as_predictor();
  ctx.L = lipschitz_upper_bound(net).value;
  ctx.grads = mean_grad_f(ctx.loss, ctx.model, ctx.f, 2000, 1, true);
  ctx.sigma2 = noise_floor(ctx.model, ctx.loss, 2000, 2).sigma2;
  return ctx;
}

}  // namespace

TEST(ClassicalBounds, ClosedForms) {
  EXPECT_DOUBLE_EQ(hoeffding_bound(100, 0.1, 1.0), std::exp(-2.0));
  EXPECT_DOUBLE_EQ(azuma_bound(50, 0.2, 1.0), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(vector_bd_bound(16, 1.0, 1.0), 2.0 * std::exp(-1.0));
  EXPECT_THROW(hoeffding_bound(0, 0.1, 1.0), Error);
  EXPECT_THROW(azuma_bound(10, 0.1, 0.0), Error);
}

TEST(SubGaussian, GaussianSamplesGiveUnitParameter) {
  CounterRng rng(1, 0);
  std::vector<double> xs(200000);
  for (auto& x : xs) x = rng.normal();
  const SubGaussEstimate e = subgaussian_estimate(xs);
  EXPECT_GT(e.sigma_hat, 0.9);
  EXPECT_LT(e.sigma_hat, 1.3);
  EXPECT_EQ(e.lambda_grid.size(), 10u);
}

TEST(SubGaussian, RademacherIsOneSubGaussian) {
  CounterRng rng(2, 0);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = rng.uniform() < 0.5 ? -1.0 : 1.0;
  EXPECT_LE(subgaussian_estimate(xs).sigma_hat, 1.02);
}

TEST(SubGaussian, DegenerateSamples) {
  EXPECT_EQ(subgaussian_estimate({}).sigma_hat, 0.0);
  EXPECT_EQ(subgaussian_estimate({2.0, 2.0, 2.0}).sigma_hat, 0.0);
}

TEST(SubGaussian, BoundedTimesGaussianProduct) {
  const auto zero = subgaussian_product_check(ProductZ::Zero, 2.0, 1.5, 20000, 1, 0);
  EXPECT_EQ(zero.sigma_hat, 0.0);
  const auto constant = subgaussian_product_check(ProductZ::Constant, 2.0, 1.5, 200000, 1, 1);
  EXPECT_NEAR(constant.ratio, 1.0, 0.15);
  const auto coupled = subgaussian_product_check(ProductZ::SignCoupled, 2.0, 1.5, 200000, 1, 2);
  EXPECT_LE(coupled.ratio, 2.0);
  EXPECT_GT(coupled.ratio, 0.5);
}

TEST(TailCheck, HoeffdingPassesAndIsJobInvariant) {
  const TailContext ctx = context(1);
  const auto a = run_tail_check(Statement::Hoeffding, ctx, {0.05, 0.1}, 50, 4000, 7, 3, 1);
  const auto b = run_tail_check(Statement::Hoeffding, ctx, {0.05, 0.1}, 50, 4000, 7, 3, 4);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].pass);
    EXPECT_FALSE(a[i].vacuous);
    EXPECT_EQ(a[i].empirical_freq, b[i].empirical_freq);
    EXPECT_EQ(a[i].analytic_bound, b[i].analytic_bound);
  }
  // P(mean - 1/2 <= -0.05) for n = 50 uniforms is about 0.11.
  EXPECT_NEAR(a[0].empirical_freq, 0.11, 0.03);
}

TEST(TailCheck, ClassicalStatementsPass) {
  const TailContext ctx = context(1);
  for (Statement s : {Statement::VectorBD, Statement::Azuma}) {
    for (const auto& r : run_tail_check(s, ctx, {0.2, 0.4}, 100, 3000, 1, 4)) {
      EXPECT_TRUE(r.pass) << to_string(s);
      EXPECT_LE(r.analytic_bound, 1.0);
    }
  }
}

TEST(TailCheck, ShippedStatementsPassOrAreVacuous) {
  const TailContext one = context(1);
  for (Statement s : {Statement::Obs33, Statement::Obs34, Statement::Obs35, Statement::Lem36}) {
    const double scale = relevant_scale(s, one);
    for (const auto& r : run_tail_check(s, one, {0.1 * scale, 0.4 * scale}, 50, 500, 2, 5)) {
      EXPECT_TRUE(r.pass) << to_string(s);
      EXPECT_EQ(r.vacuous, r.analytic_bound_uncapped >= 1.0);
    }
  }
  const TailContext three = context(3);
  for (Statement s : {Statement::Lem51_vhat, Statement::Lem52_vtilde}) {
    const double scale = relevant_scale(s, three);
    for (const auto& r : run_tail_check(s, three, {0.1 * scale, 0.4 * scale}, 50, 500, 2, 6)) {
      EXPECT_TRUE(r.pass) << to_string(s);
    }
  }
}

TEST(TailCheck, InfeasibleStatements) {
  const TailContext one = context(1), three = context(3);
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::NumericError;
  };
  EXPECT_EQ(code([&] { run_tail_check(Statement::Lem52_vtilde, one, {0.1}, 10, 10, 0, 0); }),
            ErrorCode::ConfigInfeasible);
  EXPECT_EQ(code([&] { run_tail_check(Statement::Lem36, three, {0.1}, 10, 10, 0, 0); }),
            ErrorCode::ConfigInfeasible);
  TailContext no_f = one;
  no_f.f = nullptr;
  EXPECT_EQ(code([&] { run_tail_check(Statement::Lem36, no_f, {0.1}, 10, 10, 0, 0); }),
            ErrorCode::ConfigInfeasible);
  EXPECT_THROW(run_tail_check(Statement::Obs33, one, {0.1}, 0, 10, 0, 0), Error);
}

TEST(TailCheck, AnalyticBoundsForTheMainStatements) {
  const TailContext ctx = context(1);
  const auto& k = ctx.constants;
  EXPECT_DOUBLE_EQ(analytic_bound(Statement::Obs33, ctx, 1.0, 10), std::exp(-20.0 / (k.M0 * k.M0)));
  EXPECT_DOUBLE_EQ(analytic_bound(Statement::Obs35, ctx, 1.0, 10), 2.0 * std::exp(-20.0 / (k.M2 * k.M2)));
  EXPECT_DOUBLE_EQ(relevant_scale(Statement::Obs34, ctx), k.M1);
  EXPECT_GT(relevant_scale(Statement::Lem36, ctx), 0.0);
}

TEST(Statements, NamesRoundTrip) {
  for (Statement s : {Statement::Obs33, Statement::Obs34, Statement::Obs35, Statement::Lem36,
                      Statement::Lem51_vhat, Statement::Lem52_vtilde, Statement::Hoeffding,
                      Statement::VectorBD, Statement::Azuma}) {
    EXPECT_EQ(statement_from_string(to_string(s)), s);
  }
  EXPECT_EQ(statement_from_string("Lem52"), Statement::Lem52_vtilde);
  EXPECT_THROW(statement_from_string("Lem99"), Error);
}

TEST(Statements, ReportJsonCarriesStatus) {
  TailReport r;
  r.statement = Statement::Obs33;
  r.vacuous = true;
  const std::string js = tail_report_json(r);
  EXPECT_NE(js.find("\"statement_id\":\"Obs33\""), std::string::npos);
  EXPECT_NE(js.find("\"status\":\"vacuous\""), std::string::npos);
}
