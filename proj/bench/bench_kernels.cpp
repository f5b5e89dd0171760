// Serial against parallel for each OpenMP kernel. Argument 0 runs the
// serial reference, 1 the parallel path.
#include <benchmark/benchmark.h>

#include "semicomp/cif_engine.hpp"
#include "semicomp/cox_npmle.hpp"
#include "semicomp/frailty_em.hpp"
#include "semicomp/inference.hpp"
#include "semicomp/simulation.hpp"

using namespace semicomp;

namespace {

const Dataset& sample() {
  static const Dataset d = simulate_dataset(DgpSpec::setting(2, 1000, 17));
  return d;
}

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

const std::vector<double> kTimes{2, 4, 6, 8, 10};

void BM_FitMultistate(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fit_multistate(sample(), {}, mode(state)));
}
BENCHMARK(BM_FitMultistate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EStep(benchmark::State& state) {
  MultistateFit fit = fit_multistate(sample());
  fit.alpha = std::array<double, 2>{0.4, 0.4};
  const NormalQuadrature q = gauss_hermite(20);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(sample(), fit, q, mode(state)));
}
BENCHMARK(BM_EStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PopulationCifs(benchmark::State& state) {
  const MultistateModel m = fit_multistate(sample()).model();
  const auto cov = CovariateDistribution::from_dataset(sample());
  CifOptions o;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(effect_analysis(m, cov, kTimes, o));
}
BENCHMARK(BM_PopulationCifs)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  BootstrapConfig config;
  config.resamples = 20;
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_effects(sample(), config, {}, kTimes, mode(state)));
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_McOracle(benchmark::State& state) {
  McOracleOptions o;
  o.paths = 50000;
  o.execution = mode(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(mc_counterfactual_oracle(DgpSpec::setting(1), 1, 0, DrawMode::conditional, kTimes, o));
}
BENCHMARK(BM_McOracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
