#include "qcpd/critvals.hpp"
#include "qcpd/detector.hpp"
#include "qcpd/qfit.hpp"
#include "qcpd/simlab.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace qcpd;

void BM_SupSampler(benchmark::State& state) {
  const SupSampler sampler(2, {0.0, 0.15, 0.25, 0.35, 0.45, 0.49}, {1.0, 2.5 / 3.5},
                           static_cast<int>(state.range(0)));
  std::uint64_t rep = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sampler.sample(0, rep++));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_SupSampler)->Arg(1000)->Arg(10000);

Scenario bench_scenario() {
  Scenario s;
  s.model = builtin_growth();
  s.beta0 = Vector::Ones(2);
  s.beta1 = s.beta0;
  s.k0 = 5;
  s.design_seed = 1;
  s.noise_seed = 2;
  return s;
}

void BM_FitQuantile(benchmark::State& state) {
  const Scenario s = bench_scenario();
  const StreamData d = generate_stream(s, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_quantile(s.model, d.historical, s.tau).objective);
  }
}
BENCHMARK(BM_FitQuantile)->Unit(benchmark::kMillisecond);

void BM_DetectorPush(benchmark::State& state) {
  const Scenario s = bench_scenario();
  const StreamData d = generate_stream(s, 0);
  auto art = std::make_shared<HistoricalArtifacts>(
      build_artifacts(s.model, s.beta0, d.historical, s.tau));
  Detector det(art, GammaParam(0.25), 1e9);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(det.push(d.monitoring[i]));
    i = (i + 1) % d.monitoring.size();
  }
}
BENCHMARK(BM_DetectorPush);

}  // namespace
BENCHMARK_MAIN();
