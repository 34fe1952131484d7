#include <cmath>
#include <numbers>

#include <benchmark/benchmark.h>

#include "spinqnd/estimator.hpp"
#include "spinqnd/spectra.hpp"
#include "spinqnd/witness.hpp"

namespace {

using namespace spinqnd;

SystemModel operating_point(double larmor_hz = 1e3) {
  SystemModel m;
  m.b_field = field_for_larmor(m.physical, larmor_hz) * Vec3::Ones().normalized();
  m.rates.t1_inv = 100.0;
  m.rates.t2_inv = 100.0 + std::numbers::pi * se_linewidth(2.0 * std::numbers::pi * larmor_hz, 41e3, 1.5);
  m.measurement = {1.1e-12, 0.8, 4e15, 5e-6};
  return m;
}

void BM_Discretize(benchmark::State& state) {
  const auto dyn = operating_point().dynamics();
  for (auto _ : state) benchmark::DoNotOptimize(discretize(dyn, 5e-6));
}
BENCHMARK(BM_Discretize);

void BM_FilterStep(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  FilterState s{Vec3::Zero(), dyn.q_eq, 0};
  double obs = 0.0;
  for (auto _ : state) {
    s = kf_update(kf_predict(s, dm), obs, model.measurement);
    obs = -obs + 1e-3;
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FilterStep);

void BM_SteadyState(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  for (auto _ : state) benchmark::DoNotOptimize(steady_state_covariance(dm, model.measurement, dyn.q_eq));
}
BENCHMARK(BM_SteadyState)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    const auto traj = simulate_spin(dm, dyn.q_eq, n, 1);
    benchmark::DoNotOptimize(measure_photocurrent(traj, model.measurement, 2));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Simulate)->Arg(1 << 14)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

void BM_KalmanRun(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  const auto traj = simulate_spin(dm, dyn.q_eq, static_cast<std::size_t>(state.range(0)), 1);
  const auto rec = measure_photocurrent(traj, model.measurement, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kf_run(rec, dm, model.measurement, Vec3::Zero(), dyn.q_eq));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KalmanRun)->Arg(1 << 14)->Arg(1 << 17)->Unit(benchmark::kMillisecond);

void BM_Welch(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  const auto traj = simulate_spin(dm, dyn.q_eq, 1 << 20, 1);
  const auto rec = measure_photocurrent(traj, model.measurement, 2);
  const auto seg = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(psd_welch(rec, seg));
  state.SetItemsProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_Welch)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

void BM_LorentzianFit(benchmark::State& state) {
  const auto model = operating_point();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  const auto traj = simulate_spin(dm, dyn.q_eq, 1 << 18, 1);
  const auto s = psd_welch(measure_photocurrent(traj, model.measurement, 2), 8192);
  for (auto _ : state) benchmark::DoNotOptimize(lorentzian_fit(s, FrequencyWindow{200.0, 6000.0}));
}
BENCHMARK(BM_LorentzianFit)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
