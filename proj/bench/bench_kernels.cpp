// Serial vs parallel, reference vs batched kernels.
//   ./esotune_bench --benchmark_filter=Grad

#include <benchmark/benchmark.h>

#include "esotune/dataset.hpp"
#include "esotune/estimator.hpp"
#include "esotune/tuner.hpp"

using namespace esotune;

namespace {

ExecPolicy policy_for(const benchmark::State& st) {
  return st.range(0) == 1 ? ExecPolicy::serial() : ExecPolicy::parallel(static_cast<int>(st.range(0)));
}

const std::vector<Example>& examples() {
  static const auto ex = make_examples(generate_split(PlantKind::ns, Split::train, 64, 5));
  return ex;
}

const EstimatorModel& model() {
  static const auto m = EstimatorModel::create(EstimatorConfig::desk(), PlantKind::ns, 1);
  return m;
}

std::vector<const Example*> pointers() {
  std::vector<const Example*> p;
  for (const auto& e : examples()) p.push_back(&e);
  return p;
}

PlantSpec ns_plant() {
  NsParams p{1.0, 0.5, 1.0, 1.0, 0.15, 1.0};
  return PlantSpec::ns(p, 0.007);
}

}  // namespace

static void BM_SimulateGrid(benchmark::State& st) {
  const auto grid = build_grid({5, true});
  SimConfig cfg;
  cfg.observer_init = ObserverInit::from_output;
  for (auto _ : st) benchmark::DoNotOptimize(simulate_grid(ns_plant(), cfg, grid, 1, policy_for(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(grid.size()));
}
BENCHMARK(BM_SimulateGrid)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_GenerateSplit(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(generate_split(PlantKind::m1d, Split::train, 16, 9, policy_for(st)));
  st.SetItemsProcessed(st.iterations() * 16);
}
BENCHMARK(BM_GenerateSplit)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_ForwardReference(benchmark::State& st) {
  for (auto _ : st)
    for (const auto& e : examples()) benchmark::DoNotOptimize(reference::forward(model(), e.input));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(examples().size()));
}
BENCHMARK(BM_ForwardReference)->Unit(benchmark::kMillisecond);

static void BM_ForwardBatch(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(forward_batch(model(), examples(), policy_for(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(examples().size()));
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_GradientReference(benchmark::State& st) {
  const auto p = pointers();
  ParamVector g;
  for (auto _ : st) benchmark::DoNotOptimize(reference::loss_and_gradient(model(), p, g));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(p.size()));
}
BENCHMARK(BM_GradientReference)->Unit(benchmark::kMillisecond);

static void BM_GradientBatch(benchmark::State& st) {
  const auto p = pointers();
  ParamVector g;
  for (auto _ : st) benchmark::DoNotOptimize(loss_and_gradient(model(), p, g, policy_for(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(p.size()));
}
BENCHMARK(BM_GradientBatch)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

static void BM_PredictGrid(benchmark::State& st) {
  const auto smp = sample_spec(PlantKind::ns, 3, Split::test);
  const TuneContext ctx{run_basic_experiment(smp), smp.plant.noise.sigma_n, smp.x_test0, smp.x0};
  const auto grid = build_grid({21, true});
  for (auto _ : st) benchmark::DoNotOptimize(predict_grid(model(), ctx, grid, policy_for(st)));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(grid.size()));
}
BENCHMARK(BM_PredictGrid)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
