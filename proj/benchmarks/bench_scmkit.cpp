#include <benchmark/benchmark.h>

#include "scmkit/scmkit.hpp"

using namespace scmkit;

namespace {

struct Instance {
  Eigen::VectorXd x1;
  Eigen::MatrixXd x0;
  Eigen::VectorXd v;
};

Instance random_instance(int k, int j, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Instance in{Eigen::VectorXd(k), Eigen::MatrixXd(k, j), Eigen::VectorXd(k)};
  for (int r = 0; r < k; ++r) {
    in.x1(r) = rng.uniform(-2.0, 2.0);
    for (int c = 0; c < j; ++c) in.x0(r, c) = rng.uniform(-2.0, 2.0);
    in.v(r) = rng.uniform(0.05, 1.0);
  }
  in.v /= in.v.sum();
  return in;
}

SimConfig sim_config(int donors) {
  SimConfig cfg;
  cfg.donors = donors;
  cfg.effect_path = {0.1};
  cfg.seed = 77;
  return cfg;
}

void BM_SolveInner(benchmark::State& state) {
  const Instance in = random_instance(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 11);
  for (auto _ : state) benchmark::DoNotOptimize(solve_inner(in.x1, in.x0, in.v).objective);
}
BENCHMARK(BM_SolveInner)->Args({4, 5})->Args({8, 20})->Args({12, 50});

void BM_BruteForceInner(benchmark::State& state) {
  const Instance in = random_instance(4, static_cast<int>(state.range(0)), 12);
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_inner(in.x1, in.x0, in.v, 0.02).objective);
}
BENCHMARK(BM_BruteForceInner)->Arg(3)->Arg(5);

void BM_OptimizeV(benchmark::State& state) {
  const SimConfig cfg = sim_config(static_cast<int>(state.range(0)));
  const auto sim = generate_panel(cfg);
  const PredictorBlock block = build_matrices(resolve_spec(default_study(cfg), sim.panel), sim.panel);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_v(block, 1).sum());
}
BENCHMARK(BM_OptimizeV)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Fit(benchmark::State& state) {
  const SimConfig cfg = sim_config(static_cast<int>(state.range(0)));
  const auto sim = generate_panel(cfg);
  StudySpec spec = default_study(cfg);
  spec.v_strategy = state.range(1) ? VStrategy::Nested : VStrategy::Equal;
  for (auto _ : state) benchmark::DoNotOptimize(fit(spec, sim.panel).pre_rmspe);
}
BENCHMARK(BM_Fit)->Args({8, 0})->Args({8, 1})->Args({16, 1})->Unit(benchmark::kMillisecond);

void BM_Placebos(benchmark::State& state) {
  const SimConfig cfg = sim_config(static_cast<int>(state.range(0)));
  const auto sim = generate_panel(cfg);
  const StudySpec spec = default_study(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(pseudo_p(run_placebos(spec, sim.panel)).pseudo_p);
}
BENCHMARK(BM_Placebos)->Arg(8)->Arg(14)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
