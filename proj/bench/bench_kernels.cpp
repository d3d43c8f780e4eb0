// Serial reference vs OpenMP kernels, plus one corrector solve per thread count.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "homolab/corrector.hpp"
#include "homolab/kernels.hpp"

using namespace homolab;

namespace {

struct Data {
  PeriodicGrid g;
  std::vector<double> u, G, out, coef;
  explicit Data(int n) : g(build_grid(2, n, 1.0)) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    const std::size_t s = g.sites();
    u.resize(s);
    G.resize(2 * s);
    out.resize(2 * s);
    coef.resize(4 * s);
    for (auto& v : u) v = N(rng);
    for (auto& v : G) v = N(rng);
    for (auto& v : coef) v = N(rng);
  }
};

template <bool Omp>
void BM_gradient(benchmark::State& st) {
  Data d(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::omp::gradient(d.g, 1, d.u, d.out);
    else
      kernels::serial::gradient(d.g, 1, d.u, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
  st.SetItemsProcessed(st.iterations() * d.g.sites());
}

template <bool Omp>
void BM_divergence(benchmark::State& st) {
  Data d(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::omp::divergence(d.g, 1, d.G, d.out);
    else
      kernels::serial::divergence(d.g, 1, d.G, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
  st.SetItemsProcessed(st.iterations() * d.g.sites());
}

template <bool Omp>
void BM_site_matvec(benchmark::State& st) {
  Data d(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::omp::site_matvec(d.g.sites(), 2, 2, d.coef, d.G, d.out);
    else
      kernels::serial::site_matvec(d.g.sites(), 2, 2, d.coef, d.G, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
  st.SetItemsProcessed(st.iterations() * d.g.sites());
}

template <bool Omp>
void BM_energy_inner(benchmark::State& st) {
  Data d(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    const double v = Omp ? kernels::omp::energy_inner(d.g, 1, 1.0, d.u, d.u)
                         : kernels::serial::energy_inner(d.g, 1, 1.0, d.u, d.u);
    benchmark::DoNotOptimize(v);
  }
  st.SetItemsProcessed(st.iterations() * d.g.sites());
}

void BM_corrector_solve(benchmark::State& st) {
  omp_set_num_threads(static_cast<int>(st.range(1)));
  const int n = static_cast<int>(st.range(0));
  const auto g = build_grid(2, n, n / 4.0);
  const auto om = sample_parameter_field(g, KernelSpec{KernelShape::gaussian_bump, 1.0, 1}, ClampSpec{}, 3);
  const auto fam = make_rational_uhlenbeck(1, 2);
  const double xi[2] = {1.0, 0.0};
  for (auto _ : st) benchmark::DoNotOptimize(solve_periodic_corrector(om, fam, xi).phi.values().data());
  omp_set_num_threads(omp_get_num_procs());
}

}  // namespace

BENCHMARK(BM_gradient<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_gradient<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_divergence<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_divergence<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_site_matvec<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_site_matvec<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_energy_inner<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_energy_inner<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_corrector_solve)->Args({128, 1})->Args({128, 2})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
