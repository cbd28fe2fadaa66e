#include <benchmark/benchmark.h>

#include "crt/harness.hpp"
#include "crt/polya_gamma.hpp"

namespace {

crt::SimulationConfig small_config(int threads) {
    crt::SimulationConfig cfg;
    cfg.scenario.clusters = 20;
    cfg.methods = {crt::Method::CCA, crt::Method::SI, crt::Method::MI, crt::Method::MMI};
    cfg.specs = {crt::SpecKind::MainEffects, crt::SpecKind::ThreeWay};
    cfg.iterations = 8;
    cfg.threads = threads;
    return cfg;
}

void BM_HarnessSerial(benchmark::State& state) {
    const auto cfg = small_config(1);
    for (auto _ : state) benchmark::DoNotOptimize(crt::run_simulation_serial(cfg).records.size());
}
BENCHMARK(BM_HarnessSerial)->Unit(benchmark::kMillisecond);

void BM_HarnessParallel(benchmark::State& state) {
    const auto cfg = small_config(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(crt::run_simulation(cfg).records.size());
}
BENCHMARK(BM_HarnessParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_PolyaGamma(benchmark::State& state) {
    crt::RngStream rng(7);
    const double c = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(crt::pg_sample(1, c, rng));
}
BENCHMARK(BM_PolyaGamma)->Arg(0)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
