#include "robustlaw/bounds.hpp"
#include "robustlaw/experiment.hpp"
#include "robustlaw/function_class.hpp"

#include <benchmark/benchmark.h>

using namespace robustlaw;

namespace {

void BM_Divergence(benchmark::State& state, const LossSpec& loss) {
  CounterRng rng(1, 0);
  const auto K = loss.K();
  Vec a = Vec::Constant(K, K == 1 ? 0.3 : 1.0 / static_cast<double>(K));
  Vec b = a;
  if (loss.kind() == LossKind::Square || loss.kind() == LossKind::Mahalanobis) {
    for (Eigen::Index i = 0; i < K; ++i) b[i] = 0.3 * rng.normal();
  } else {
    b[0] += 0.05;
    if (K > 1) b[K - 1] -= 0.05;
  }
  for (auto _ : state) benchmark::DoNotOptimize(divergence(loss, a, b));
}
BENCHMARK_CAPTURE(BM_Divergence, square_k3, LossSpec::square(3, 2.0));
BENCHMARK_CAPTURE(BM_Divergence, neg_entropy_k3, LossSpec::neg_entropy(3, 1.0, 0.1));
BENCHMARK_CAPTURE(BM_Divergence, binary_entropy, LossSpec::binary_entropy(1.0, 0.1));

void BM_NetworkForward(benchmark::State& state) {
  FunctionClass cls;
  const int width = static_cast<int>(state.range(0));
  cls.arch = {64, width, 1};
  cls.layer_bound = {1.0, 1.0};
  cls.M = 1.0;
  const Network net = realize(cls, init_params(cls, 1, 3));
  CounterRng rng(2, 0);
  Vec x(64);
  for (auto& v : x) v = rng.normal() / 8.0;
  for (auto _ : state) benchmark::DoNotOptimize(net(x));
}
BENCHMARK(BM_NetworkForward)->Arg(64)->Arg(512);

void BM_IdentityBlock(benchmark::State& state) {
  IdentitySuiteOptions o;
  o.decomposition_draws = 250;
  o.triangle_cases = 250;
  o.gradient_cases = 25;
  for (auto _ : state) benchmark::DoNotOptimize(run_identity_suite(o).all_pass());
}
BENCHMARK(BM_IdentityBlock)->Unit(benchmark::kMillisecond);

void BM_BoundEvaluation(benchmark::State& state) {
  BoundInputs in;
  in.constants = loss_constants(LossSpec::neg_entropy(3, 1.0, 0.1));
  in.K = 3;
  in.r = 3;
  in.n = 1e6;
  in.d = 64;
  in.p = 1e4;
  in.eps = 0.1;
  in.J = 10;
  in.W = 30;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_bounds(in).delta_total);
}
BENCHMARK(BM_BoundEvaluation);

}  // namespace

BENCHMARK_MAIN();
