// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "rttd/detector.hpp"
#include "rttd/harness.hpp"

using namespace rttd;

namespace {

struct Fixture {
  harness::ScenarioConfig cfg = harness::presets::default_scenario(1);
  harness::ScenarioData data = harness::build_data(cfg);
  dist::ProbeContext ctx = harness::build_probe_context(cfg, data);
  nn::ModelWeights start = harness::run_primary_training(cfg, data, ctx)[4].weights;
  std::vector<nn::ModelWeights> models = harness::replicate_subrun(start, cfg, 4, data, ctx);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_PairwiseParallel(benchmark::State& state) {
  const auto& f = fixture();
  const auto metric = static_cast<dist::Metric>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(detect::pairwise_distances(f.models, metric, f.ctx));
  state.SetLabel(std::string(dist::to_string(metric)));
}

void BM_PairwiseSerial(benchmark::State& state) {
  const auto& f = fixture();
  const auto metric = static_cast<dist::Metric>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(detect::pairwise_distances_serial(f.models, metric, f.ctx));
  state.SetLabel(std::string(dist::to_string(metric)));
}

void BM_Replicate(benchmark::State& state) {
  const auto& f = fixture();
  const bool parallel = state.range(0) != 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(harness::replicate_subrun(f.start, f.cfg, 4, f.data, f.ctx, parallel));
  state.SetLabel(parallel ? "parallel" : "serial");
}

}  // namespace

BENCHMARK(BM_PairwiseParallel)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseSerial)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Replicate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
