#include "robustlaw/bregman.hpp"
#include "robustlaw/config.hpp"
#include "robustlaw/decomposition.hpp"
#include "robustlaw/function_class.hpp"
#include "robustlaw/sampler.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>

using namespace robustlaw;
using boost::multiprecision::cpp_int;

namespace {

FunctionClass mlp(std::vector<int> arch, double bound, Head head = Head::IdentityClip, double M = 1.0) {
  FunctionClass cls;
  cls.arch = std::move(arch);
  cls.layer_bound.assign(cls.arch.size() - 1, bound);
  cls.head = head;
  cls.M = M;
  cls.validate();
  return cls;
}

Vec random_in_box(const FunctionClass& cls, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  const ParamBox box = cls.box();
  Vec w(box.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(box.lo[i], box.hi[i]);
  return w;
}

}  // namespace

TEST(FunctionClass, ParameterCountAndDiameter) {
  const FunctionClass cls = mlp({4, 8, 2}, 0.5);
  EXPECT_EQ(cls.num_params(), 4u * 8 + 8 + 8 * 2 + 2);
  EXPECT_NEAR(cls.diameter(), std::sqrt(58.0), 1e-12);
  EXPECT_EQ(cls.output_dim(), 2);
}

TEST(FunctionClass, ZeroWeightsGiveClippedBias) {
  const FunctionClass cls = mlp({3, 2}, 5.0, Head::IdentityClip, 1.0);
  Vec w = Vec::Zero(static_cast<Eigen::Index>(cls.num_params()));
  w[6] = 0.4;   // b_0
  w[7] = -3.0;  // b_1
  const Network net(cls, w);
  CounterRng rng(1, 0);
  for (int t = 0; t < 10; ++t) {
    const Vec y = net(rng.normal_vector(3, 1.0));
    EXPECT_DOUBLE_EQ(y[0], 0.4);
    EXPECT_DOUBLE_EQ(y[1], -1.0);
  }
}

TEST(FunctionClass, IdentityLayerIsClip) {
  const FunctionClass cls = mlp({2, 2}, 1.0, Head::IdentityClip, 1.0);
  Vec w(6);
  w << 1, 0, 0, 1, 0, 0;
  const Network net(cls, w);
  Vec x(2);
  x << 0.3, -2.5;
  const Vec y = net(x);
  EXPECT_DOUBLE_EQ(y[0], 0.3);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}

TEST(FunctionClass, RealizationsStayInTheRange) {
  const LossSpec ent = LossSpec::neg_entropy(3, 1.0, 0.1);
  const FunctionClass soft = mlp({4, 6, 3}, 2.0, Head::Softmax, 1.0);
  const FunctionClass reg = mlp({4, 6, 3}, 2.0, Head::IdentityClip, 1.0);
  const LossSpec sq = LossSpec::square(3, 1.0);
  CounterRng rng(2, 0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network a(soft, random_in_box(soft, s)), b(reg, random_in_box(reg, s));
    for (int t = 0; t < 20; ++t) {
      const Vec x = 3.0 * rng.normal_vector(4, 1.0);
      EXPECT_TRUE(ent.domain().r_region.contains(a(x)));
      EXPECT_TRUE(sq.domain().r_region.contains(b(x)));
    }
  }
}

TEST(FunctionClass, BinaryOutputReportsClassZeroProbability) {
  FunctionClass cls = mlp({2, 2}, 1.0, Head::Softmax, 1.0);
  cls.binary_output = true;
  Vec w(6);
  w << 0, 0, 0, 0, 0.5, -0.5;
  const Network net(cls, w);
  const Vec y = net(Vec::Zero(2));
  ASSERT_EQ(y.size(), 1);
  EXPECT_NEAR(y[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(FunctionClass, RealizeRejectsOrProjects) {
  const FunctionClass cls = mlp({2, 3, 1}, 0.5);
  Vec w = Vec::Constant(static_cast<Eigen::Index>(cls.num_params()), 0.1);
  w[3] = 0.9;
  try {
    realize(cls, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParamOutOfDomain);
  }
  const Network net = realize(cls, w, ParamPolicy::Project);
  EXPECT_DOUBLE_EQ(net.params()[3], 0.5);
  EXPECT_THROW(realize(cls, Vec::Zero(3)), Error);
}

TEST(FunctionClass, JacobianMatchesFiniteDifferences) {
  for (Head head : {Head::IdentityClip, Head::Softmax}) {
    FunctionClass cls = mlp({3, 7, 2}, 1.0, head, 5.0);
    cls.clip = ClipMode::Smooth;
    const Network net(cls, random_in_box(cls, 9));
    CounterRng rng(3, 0);
    for (int t = 0; t < 10; ++t) {
      const Vec x = rng.normal_vector(3, 1.0);
      const Mat J = net.jacobian(x);
      const double h = 1e-6;
      for (int j = 0; j < 3; ++j) {
        Vec e = Vec::Zero(3);
        e[j] = h;
        const Vec fd = (net(x + e) - net(x - e)) / (2 * h);
        EXPECT_LT((fd - J.col(j)).norm(), 1e-6);
      }
    }
  }
}

TEST(FunctionClass, SpectralNormAgreesWithSvd) {
  CounterRng rng(4, 0);
  for (int t = 0; t < 10; ++t) {
    Mat A(5, 7);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
    const SpectralNorm sn = spectral_norm(A);
    const double ref = Eigen::JacobiSVD<Mat>(A).singularValues()[0];
    EXPECT_TRUE(sn.converged);
    EXPECT_NEAR(sn.value, ref, 1e-9 * ref);
  }
}

TEST(FunctionClass, LipschitzLowerBoundNeverExceedsUpper) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const FunctionClass cls = mlp({6, 16, 2}, 0.8, s % 2 ? Head::Softmax : Head::IdentityClip, 10.0);
    const Network net(cls, random_in_box(cls, s));
    const LipschitzUpper ub = lipschitz_upper_bound(net);
    const double lb = lipschitz_lower_bound(net, 200, s, 1);
    EXPECT_GT(lb, 0.0);
    EXPECT_LE(lb, ub.value * (1 + 1e-9));
    EXPECT_EQ(ub.layer_norms.size(), 2u);
  }
}

TEST(FunctionClass, LinearNetworkLipschitzIsExact) {
  const FunctionClass cls = mlp({2, 2}, 3.0, Head::IdentityClip, 100.0);
  Vec w(6);
  w << 2, 0, 0, 0.5, 0, 0;
  const Network net(cls, w);
  EXPECT_NEAR(lipschitz_upper_bound(net).value, 2.0, 1e-12);
  EXPECT_NEAR(lipschitz_lower_bound(net, 200, 0, 0), 2.0, 1e-6);
}

TEST(FunctionClass, CertifiedJBoundsParameterSensitivity) {
  const FunctionClass cls = mlp({3, 5, 1}, 0.7);
  const double est = parameterization_lipschitz_estimate(cls, 300, 1, 2);
  EXPECT_GT(est, 0.0);
  EXPECT_LE(est, cls.j_cert());
}

TEST(EpsilonNet, ExactCountsForSmallCases) {
  NetSize s = epsilon_net_size(1.0, 2, 0.5);
  ASSERT_TRUE(s.count);
  EXPECT_EQ(*s.count, cpp_int(25));
  EXPECT_NEAR(s.log_count, 2 * std::log(5.0), 1e-15);

  s = epsilon_net_size(1.0, 3, 0.3);  // (1 + 2/0.3)^3 = 450.6...
  ASSERT_TRUE(s.count);
  EXPECT_EQ(*s.count, cpp_int(451));

  EXPECT_EQ(*epsilon_net_size(1.0, 0, 0.1).count, cpp_int(1));
  EXPECT_EQ(*epsilon_net_size(1.0, 5, 2.0).count, cpp_int(1));
  EXPECT_THROW(epsilon_net_size(1.0, 2, 0.0), Error);
}

TEST(EpsilonNet, HugeCountsKeepTheLog) {
  const NetSize s = epsilon_net_size(100.0, 100000, 1e-3);
  EXPECT_FALSE(s.count);
  EXPECT_NEAR(s.log_count, 100000 * std::log1p(2e5), 1e-6);
}

TEST(EpsilonNet, GridNetCoversAndRespectsTheBound) {
  ParamBox box{Vec::Constant(3, -1.0), Vec::Constant(3, 1.0)};
  for (double e : {0.5, 1.0, 2.0}) {
    const NetOfFunctions net = build_grid_net(box, e, 2.0, 1'000'000, 3);
    EXPECT_EQ(net.covering_rate, 1.0);
    EXPECT_EQ(net.count, net.center_params.size());
    EXPECT_DOUBLE_EQ(net.radius, 2.0 * e);
    const NetSize bound = epsilon_net_size(box.diameter(), 3, e);
    EXPECT_LE(cpp_int(net.count), *bound.count);
    for (const Vec& c : net.center_params) EXPECT_TRUE(box.contains(c));
  }
  try {
    build_grid_net(ParamBox{Vec::Constant(20, 0.0), Vec::Constant(20, 1.0)}, 0.01, 1.0, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NetBudgetExceeded);
  }
}

TEST(EpsilonNet, NetOfFunctionsIsWithinJTimesRadius) {
  const FunctionClass cls = mlp({1, 1}, 1.0, Head::IdentityClip, 10.0);
  const NetOfFunctions net = build_grid_net(cls, 0.3, 1'000'000, 1);
  CounterRng rng(5, 0);
  for (int t = 0; t < 50; ++t) {
    const Vec w = random_in_box(cls, static_cast<std::uint64_t>(t));
    double best = INFINITY;
    const Vec* nearest = nullptr;
    for (const Vec& c : net.center_params) {
      if ((c - w).norm() < best) {
        best = (c - w).norm();
        nearest = &c;
      }
    }
    ASSERT_LE(best, 0.3 + 1e-12);
    const Network a(cls, w), b(cls, *nearest);
    for (int k = 0; k < 20; ++k) {
      Vec x(1);
      x[0] = rng.uniform(-cls.input_radius, cls.input_radius);
      EXPECT_LE((a(x) - b(x)).norm(), net.radius + 1e-12);
    }
  }
}

TEST(Training, ReachesTheOverfitTargetOnASmallProblem) {
  DataModel m;
  m.d = 4;
  m.r = 1;
  m.weights = Vec::Ones(1);
  m.means = Mat::Zero(1, 4);
  m.law = LabelLaw::Regression;
  m.mean_map = MeanMap::Tanh;
  m.K = 1;
  m.M = 1.0;
  m.amplitude = 0.5;
  m.noise_scale = 0.5;
  m.seed = 3;
  const LossSpec loss = LossSpec::square(1, 1.0);
  const auto data = sample_batch(m, 24, 1);
  const FunctionClass cls = mlp({4, 64, 1}, 1.0);
  TrainOptions opt;
  opt.max_steps = 3000;
  const double sigma2 = 0.25 / 3.0;
  const TrainResult r = train_overfit(cls, loss, data, sigma2, 0.25 * sigma2, init_params(cls, 1, 0), opt);
  EXPECT_TRUE(r.achieved);
  EXPECT_FALSE(r.error);
  const Network net(cls, r.w);
  EXPECT_NEAR(r.gap, empirical_overfit_gap(loss, net.as_predictor(), data, sigma2), 1e-12);
  EXPECT_TRUE(cls.box().contains(r.w));
}

TEST(Training, ZeroNoiseFloorIsInfeasible) {
  const LossSpec loss = LossSpec::square(1, 1.0);
  const FunctionClass cls = mlp({2, 4, 1}, 1.0);
  std::vector<Sample> data(5, Sample{Vec::Zero(2), Vec::Zero(1), 0});
  TrainOptions opt;
  opt.max_steps = 20;
  const TrainResult r = train_overfit(cls, loss, data, 0.0, 0.01, init_params(cls, 0, 0), opt);
  EXPECT_TRUE(r.infeasible);
  EXPECT_FALSE(r.achieved);
}

TEST(Params, BinaryRoundTripAndManifest) {
  const FunctionClass cls = mlp({3, 4, 1}, 0.5);
  const Vec w = init_params(cls, 7, 1);
  const auto path = std::filesystem::temp_directory_path() / "robustlaw_params_test.bin";
  write_params_binary(path, w);
  EXPECT_EQ(read_params_binary(path), w);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 8u * cls.num_params());
  std::filesystem::remove(path);
  const std::string manifest = params_manifest(cls, 7);
  EXPECT_NE(manifest.find("class.arch = [3, 4, 1]"), std::string::npos);
  EXPECT_EQ(init_params(cls, 7, 1), w);
}

TEST(FunctionClass, FromConfig) {
  const Config cfg = Config::parse("class.arch = [4, 8, 1]\nclass.param_box = [0.5, 0.25]\n");
  const FunctionClass cls = FunctionClass::from_config(cfg, LossSpec::square(1, 1.0));
  EXPECT_EQ(cls.layer_bound, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(cls.head, Head::IdentityClip);
  Config bad = cfg;
  bad.set("class.arch", "[4, 8, 2]");
  EXPECT_THROW(FunctionClass::from_config(bad, LossSpec::square(1, 1.0)), Error);
}
