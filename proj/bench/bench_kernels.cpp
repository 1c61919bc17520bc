// Serial reference vs OpenMP backend on the data-parallel kernels.
//
//   qgeq_bench [--benchmark_filter=...]
//
// The second argument of each benchmark is the backend (0 serial, 1 openmp).

#include <benchmark/benchmark.h>

#include <cmath>

#include "qgeq/ensemble_atlas.hpp"
#include "qgeq/kernels.hpp"
#include "qgeq/ldp_montecarlo.hpp"

using namespace qgeq;

namespace {

Backend backend_of(const benchmark::State& s) { return s.range(1) ? Backend::openmp : Backend::serial; }

Grid square(std::size_t n) {
  GridSpec s;
  s.n1 = n;
  s.n2 = n;
  s.radius = DeformationRadius::finite(0.2);
  return Grid(s);
}

Grid zonal(std::size_t n2) {
  GridSpec s;
  s.n1 = 1;
  s.n2 = n2;
  s.radius = DeformationRadius::finite(0.2);
  return Grid(s);
}

void BM_TiltedMoments(benchmark::State& state) {
  const Grid g = square(std::size_t(state.range(0)));
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Field psi = g.sample([](double x1, double x2) { return 0.02 * std::cos(6.0 * x1) * std::sin(3.0 * x2); });
  for (auto _ : state) benchmark::DoNotOptimize(tilted_moments(backend_of(state), p, g, psi, -40.0, 0.1));
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.size()));
}
BENCHMARK(BM_TiltedMoments)->ArgsProduct({{64, 256, 1024}, {0, 1}});

void BM_MeanFieldMap(benchmark::State& state) {
  const Grid g = square(std::size_t(state.range(0)));
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Field psi = g.sample([](double x1, double x2) { return 0.02 * std::cos(6.0 * x1) * std::sin(3.0 * x2); });
  Field out;
  for (auto _ : state) benchmark::DoNotOptimize(mean_field_map(backend_of(state), p, psi, -40.0, 0.1, out));
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.size()));
}
BENCHMARK(BM_MeanFieldMap)->ArgsProduct({{256, 1024}, {0, 1}});

void BM_InformationSum(benchmark::State& state) {
  const Grid g = square(std::size_t(state.range(0)));
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Field q = g.sample([](double x1, double x2) { return std::cos(6.0 * x1) * std::sin(3.0 * x2); });
  for (auto _ : state) benchmark::DoNotOptimize(information_sum(backend_of(state), p, g, q));
  state.SetItemsProcessed(state.iterations() * std::int64_t(g.size()));
}
BENCHMARK(BM_InformationSum)->ArgsProduct({{256, 1024}, {0, 1}});

// One sweep of range(0) energy rows; rows run in parallel under openmp.
void BM_SweepRows(benchmark::State& state) {
  const Grid g = zonal(256);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const double rows = double(state.range(0));
  const SweepSpec spec{{0.01, 0.01 + 0.005 * (rows - 1), 0.005}, {-1.0, 1.0, 0.1}};
  SweepOptions o;
  o.backend = backend_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(sweep_entropy(g, p, topo, spec, o));
}
BENCHMARK(BM_SweepRows)->ArgsProduct({{4, 8}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_ClassifyAll(benchmark::State& state) {
  EntropySurface s(Axis{0.0025, 0.1, 0.0025}.values(), Axis{-2.0, 2.0, 0.05}.values());
  for (std::size_t k = 0; k < s.size(); ++k) {
    SurfaceRecord& r = s[k];
    r.E = s.energies()[k / s.cols()];
    r.Gamma = s.circulations()[k % s.cols()];
    r.admissible = r.converged = true;
    r.S = -r.E * r.E - std::pow(r.Gamma * r.Gamma - 0.5, 2);
    r.beta = -2 * r.E;
    r.gamma = -4 * r.Gamma * (r.Gamma * r.Gamma - 0.5);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify_all(s, {}, backend_of(state)));
    benchmark::DoNotOptimize(concave_hull(s, backend_of(state)));
  }
}
BENCHMARK(BM_ClassifyAll)->ArgsProduct({{0}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  MCConfig c;
  c.n_schedule = {std::size_t(state.range(0))};
  c.trials = 100000;
  c.sampling = BlockSampling::direct;
  c.backend = backend_of(state);
  const PriorModel p = PriorModel::gaussian();
  for (auto _ : state) benchmark::DoNotOptimize(estimate_rate(c, p, 0.5));
}
BENCHMARK(BM_MonteCarlo)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
