#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "bubbletrack/bubbles.hpp"
#include "bubbletrack/numerics.hpp"
#include "bubbletrack/realization.hpp"
#include "bubbletrack/transfer.hpp"

using namespace bubbletrack;

namespace {

constexpr double w0 = 2 * std::numbers::pi;

// Chain of m bubbles with spacing d around the origin.
BubbleEnsemble chain_cluster(int m, double d, double eps) {
  BubbleEnsemble e;
  e.eps = eps;
  e.p = 0.5;
  e.cluster_centers = {Eigen::Vector3d::Zero()};
  for (int i = 0; i < m; ++i) {
    e.positions.push_back({d * (i - 0.5 * (m - 1)), 0, 0});
    e.cluster_of.push_back(0);
    e.omega_m.push_back(w0);
    e.capacitance.push_back(1e-3);
  }
  return e;
}

Signal packet(double omega, double dt, double T, double width) {
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal s(dt, n, 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = s.time(k);
    s.data(k, 0) = std::exp(-0.5 * std::pow((t - 0.5 * T) / width, 2)) * std::cos(omega * t);
  }
  return s;
}

void BM_PencilDet(benchmark::State& state) {
  const SMatrixEvaluator ev(chain_cluster(static_cast<int>(state.range(0)), 1e-3, 1e-2), 1.0);
  const cplx s(-0.01, 0.99 * w0);
  for (auto _ : state) benchmark::DoNotOptimize(ev.det(s));
}
BENCHMARK(BM_PencilDet)->Arg(2)->Arg(4)->Arg(8)->Arg(12);

void BM_FindPole(benchmark::State& state) {
  const SMatrixEvaluator ev(chain_cluster(static_cast<int>(state.range(0)), 1e-3, 1e-2), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(principal_pole(ev, 0));
}
BENCHMARK(BM_FindPole)->Arg(2)->Arg(4)->Arg(8);

void BM_DelayedIntegrator(benchmark::State& state) {
  const BubbleEnsemble e = chain_cluster(static_cast<int>(state.range(0)), 0.1, 0.1);
  const DelayedSystem sys = build_system(e, 1.0);
  const double dt = sys.min_delay() / 8, T = 5.0;
  const auto n = static_cast<Eigen::Index>(std::llround(T / dt)) + 1;
  Signal F(dt, n, static_cast<Eigen::Index>(e.size()));
  for (Eigen::Index k = 0; k < n; ++k) F.data.row(k).setConstant(onset_ramp(k * dt, 1.0).v * std::sin(3.0 * k * dt));
  for (auto _ : state) benchmark::DoNotOptimize(integrate_delayed(sys, F, T, dt));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DelayedIntegrator)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Bandpass(benchmark::State& state) {
  const double T = static_cast<double>(state.range(0));
  const Signal s = packet(7.5, 2e-3, T, 0.1 * T);
  const BandFilter f({{6.5, 8.5}}, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(bandpass(s, f));
  state.SetItemsProcessed(state.iterations() * s.samples());
}
BENCHMARK(BM_Bandpass)->Arg(20)->Arg(120)->Unit(benchmark::kMillisecond);

void BM_Synthesis(benchmark::State& state) {
  TransducerArray a;
  a.positions = {{3, 0, 0}};
  a.clock_advance = 2.5;
  const SMatrixEvaluator ev(chain_cluster(1, 0.0, 0.02), 1.0, a);
  const BandLimitedSource target = project_to_band_space(packet(7.5, 2e-3, 120.0, 10.0), {BandFilter({{6.5, 8.5}}, 0.3)});
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_controls(target, ev));
}
BENCHMARK(BM_Synthesis)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
