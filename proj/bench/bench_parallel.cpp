// Serial vs OpenMP kernels: value iteration over grids of growing size and a
// small interval sweep.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "mlah/harness.hpp"
#include "mlah/planning.hpp"

namespace {

mlah::GridSpec square_grid(int side) {
  mlah::GridSpec spec;
  spec.width = side;
  spec.height = side;
  spec.goal = {(side + 1) / 2, (side + 1) / 2};
  return spec;
}

void BM_ValueIterationSerial(benchmark::State& state) {
  const auto spec = square_grid(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mlah::value_iteration_serial(spec));
  state.counters["cells"] = spec.cell_count();
}

void BM_ValueIterationParallel(benchmark::State& state) {
  const auto spec = square_grid(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mlah::value_iteration_parallel(spec));
  state.counters["cells"] = spec.cell_count();
  state.counters["threads"] = omp_get_max_threads();
}

mlah::ExperimentConfig sweep_config() {
  mlah::ExperimentConfig c;
  c.attack = {mlah::AttackVariant::kMirrorX, 11.0};
  c.training.pretrain_rollouts = 1;
  c.training.joint_rollouts = 2;
  c.training.rollout_step_cap = 500;
  c.training.seeds = {0, 1};
  c.training.eval_episodes = 5;
  c.sweep.intervals = {1000, 10};
  return c;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto config = sweep_config();
  for (auto _ : state) benchmark::DoNotOptimize(mlah::run_sweep_serial(config));
}

void BM_SweepParallel(benchmark::State& state) {
  const auto config = sweep_config();
  for (auto _ : state) benchmark::DoNotOptimize(mlah::run_sweep_parallel(config));
  state.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(BM_ValueIterationSerial)->Arg(21)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ValueIterationParallel)->Arg(21)->Arg(51)->Arg(101)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
