#include "robustlaw/decomposition.hpp"
#include "robustlaw/function_class.hpp"
#include "robustlaw/sampler.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace robustlaw;

namespace {

DataModel classification(int r, double alpha = 0.1) {
  DataModel m;
  m.d = 5;
  m.r = r;
  m.weights = Vec::Constant(r, 1.0 / r);
  m.means = Mat::Zero(r, 5);
  for (int k = 0; k < r; ++k) m.means(k, k) = 2.0;
  m.law = LabelLaw::Classification;
  m.mean_map = MeanMap::SoftmaxFloor;
  m.K = 3;
  m.classes = 3;
  m.alpha = alpha;
  m.seed = 17;
  m.validate();
  return m;
}

DataModel regression() {
  DataModel m;
  m.d = 3;
  m.r = 1;
  m.weights = Vec::Ones(1);
  m.means = Mat::Zero(1, 3);
  m.law = LabelLaw::Regression;
  m.mean_map = MeanMap::Tanh;
  m.K = 1;
  m.M = 1.0;
  m.amplitude = 0.5;
  m.noise_scale = 0.5;
  m.seed = 2;
  m.validate();
  return m;
}

Predictor softmax_net(int seed) {
  FunctionClass cls;
  cls.arch = {5, 8, 3};
  cls.layer_bound = {1.0, 1.0};
  cls.head = Head::Softmax;
  return Network(cls, init_params(cls, static_cast<std::uint64_t>(seed), 0)).as_predictor();
}

}  // namespace

TEST(Decompose, IdentityHoldsPerSample) {
  const LossSpec loss = LossSpec::neg_entropy(3, 1.0, 0.1);
  const DataModel m = classification(2);
  const Predictor f = softmax_net(1);
  const GradEstimate e = mean_grad_f(loss, m, f, 2000, 1, false);
  for (const Sample& s : sample_batch(m, 500, 2)) {
    const DecompositionRecord r = decompose(loss, m, f, s, 0.9, e.overall, e.provenance);
    EXPECT_LE(r.residual_rel, 1e-12);
    EXPECT_GE(r.phi1, 0.0);
    EXPECT_EQ(r.e_grad_provenance, e.provenance);
  }
}

TEST(Decompose, PredictingTheConditionalMeanZeroesPhi1) {
  const LossSpec loss = LossSpec::square(1, 1.0);
  const DataModel m = regression();
  const Predictor f = [&](const Vec& x) { return conditional_mean(m, x); };
  for (const Sample& s : sample_batch(m, 100, 3)) {
    const DecompositionRecord r = decompose(loss, m, f, s, 1.0 / 12, Vec::Zero(1));
    EXPECT_EQ(r.phi1, 0.0);
    EXPECT_NEAR(r.z, r.phi2 + r.sigma2, 1e-15);
  }
}

TEST(Decompose, ConstantPredictorHasNoGamma3) {
  const LossSpec loss = LossSpec::square(1, 1.0);
  const DataModel m = regression();
  const Predictor f = [](const Vec&) { return Vec::Constant(1, 0.3); };
  const GradEstimate e = mean_grad_f(loss, m, f, 1000, 0, false);
  EXPECT_NEAR(e.overall[0], 0.6, 1e-15);
  EXPECT_EQ(e.overall_stderr[0], 0.0);
  for (const Sample& s : sample_batch(m, 50, 4)) {
    EXPECT_NEAR(decompose(loss, m, f, s, 0.1, e.overall).gamma3, 0.0, 1e-15);
  }
}

TEST(Decompose, ZeroMeanTermsAverageOut) {
  const LossSpec loss = LossSpec::square(1, 1.0);
  const DataModel m = regression();
  const Predictor f = [](const Vec& x) { return Vec::Constant(1, 0.5 * std::tanh(x[1])); };
  const GradEstimate e = mean_grad_f(loss, m, f, 20000, 5, false);
  const double sigma2 = noise_floor(m, loss, 1000, 0).sigma2;
  const auto batch = sample_batch(m, 40000, 6);
  double s2 = 0, g1 = 0, g2 = 0, g3 = 0;
  for (const Sample& s : batch) {
    const DecompositionRecord r = decompose(loss, m, f, s, sigma2, e.overall);
    s2 += r.phi2;
    g1 += r.gamma1;
    g2 += r.gamma2;
    g3 += r.gamma3;
  }
  const double n = static_cast<double>(batch.size());
  // Each term is bounded by a small constant, so 5 / sqrt(n) is a generous band.
  EXPECT_NEAR(s2 / n, 0.0, 5 / std::sqrt(n));
  EXPECT_NEAR(g1 / n, 0.0, 10 / std::sqrt(n));
  EXPECT_NEAR(g2 / n, 0.0, 10 / std::sqrt(n));
  EXPECT_NEAR(g3 / n, 0.0, 10 / std::sqrt(n));
}

TEST(Decompose, ConditionalMeanOutsideARegionIsADomainViolation) {
  const LossSpec loss = LossSpec::neg_entropy(3, 1.0, 0.3);  // A needs every q_k >= 0.3
  const DataModel m = classification(1, 0.05);
  const Predictor f = softmax_net(2);
  bool thrown = false;
  for (const Sample& s : sample_batch(m, 200, 7)) {
    try {
      decompose(loss, m, f, s, 0.5, Vec::Zero(3));
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DomainViolation);
      thrown = true;
      break;
    }
  }
  EXPECT_TRUE(thrown);
}

TEST(MeanGrad, PerComponentRowsAndValidation) {
  const LossSpec loss = LossSpec::neg_entropy(3, 1.0, 0.1);
  const DataModel m = classification(3);
  const Predictor f = softmax_net(3);
  const GradEstimate g = mean_grad_f(loss, m, f, 3000, 8, true);
  EXPECT_EQ(g.per_component.rows(), 3);
  const Vec avg = (g.per_component.transpose() * m.weights);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(avg[k], g.overall[k], 6 * g.overall_stderr[k] + 0.05);
  EXPECT_THROW(mean_grad_f(loss, m, f, 999, 0, false), Error);
  EXPECT_EQ(mean_grad_f(loss, m, f, 1000, 4, true).overall, mean_grad_f(loss, m, f, 1000, 4, false).overall);
}

TEST(MixtureTerms, SplitAndProductAreExact) {
  const LossSpec loss = LossSpec::neg_entropy(3, 1.0, 0.1);
  const DataModel m = classification(3);
  const Predictor f = softmax_net(4);
  const GradEstimate g = mean_grad_f(loss, m, f, 2000, 9, true);
  const auto batch = sample_batch(m, 300, 10);
  const MixtureTermsRecord rec = mixture_terms(loss, m, f, batch, g);
  EXPECT_EQ(rec.t.rows(), 300);
  EXPECT_LE(rec.split_residual, 1e-12);
  EXPECT_EQ(rec.product_residual, 0.0);
  EXPECT_THROW(mixture_terms(loss, m, f, batch, mean_grad_f(loss, m, f, 1000, 0, false)), Error);
}

TEST(OverfitGap, IsNoiseFloorMinusEmpiricalRisk) {
  const LossSpec loss = LossSpec::square(1, 1.0);
  std::vector<Sample> data = {{Vec::Zero(1), Vec::Constant(1, 0.5), 0},
                              {Vec::Zero(1), Vec::Constant(1, -0.5), 0}};
  const Predictor f = [](const Vec&) { return Vec::Constant(1, 0.0); };
  EXPECT_DOUBLE_EQ(empirical_overfit_gap(loss, f, data, 0.3), 0.3 - 0.25);
  EXPECT_THROW(empirical_overfit_gap(loss, f, {}, 0.3), Error);
}

TEST(DecompositionCsv, HeaderAndRows) {
  DecompositionRecord r;
  r.z = 1.0;
  std::ostringstream out;
  write_decomposition_csv(out, {r, r});
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("i,z,phi1,phi2,gamma1,gamma2,gamma3,residual\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}
