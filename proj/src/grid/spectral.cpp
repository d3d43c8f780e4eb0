#include "homolab/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace homolab {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double laplacian_symbol(const PeriodicGrid& g, const std::array<int, 3>& k) {
  double s = 0.0;
  const double h2 = g.spacing * g.spacing;
  for (int i = 0; i < g.dim; ++i) {
    const double t = std::sin(std::numbers::pi * k[i] / g.n);
    s += 4.0 * t * t / h2;
  }
  return s;
}

struct SpectralSolver::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::vector<double> real;
  std::vector<std::complex<double>> spec;  // periodic only
  std::vector<double> interior;            // dirichlet only
  std::size_t modes = 0;
  double norm = 1.0;
};

SpectralSolver::SpectralSolver(const PeriodicGrid& g, Boundary b)
    : grid_(g), boundary_(b), plans_(std::make_unique<Plans>()) {
  const int d = g.dim;
  auto& p = *plans_;
  std::lock_guard lock(fftw_planner_mutex());
  if (b == Boundary::periodic) {
    int dims[3] = {g.n, g.n, g.n};
    p.real.assign(g.sites(), 0.0);
    p.modes = g.sites() / g.n * (g.n / 2 + 1);
    p.spec.assign(p.modes, {0.0, 0.0});
    auto* cplx = reinterpret_cast<fftw_complex*>(p.spec.data());
    p.forward = fftw_plan_dft_r2c(d, dims, p.real.data(), cplx, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.backward = fftw_plan_dft_c2r(d, dims, cplx, p.real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.norm = 1.0 / static_cast<double>(g.sites());
    symbol_.resize(p.modes);
    const int nh = g.n / 2 + 1;
    for (std::size_t m = 0; m < p.modes; ++m) {
      std::array<int, 3> k{0, 0, 0};
      std::size_t r = m;
      k[d - 1] = static_cast<int>(r % nh);
      r /= nh;
      for (int i = d - 2; i >= 0; --i) {
        k[i] = static_cast<int>(r % g.n);
        r /= g.n;
      }
      symbol_[m] = laplacian_symbol(g, k);
    }
  } else {
    const int ni = g.n - 1;
    int dims[3] = {ni, ni, ni};
    fftw_r2r_kind kinds[3] = {FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00};
    std::size_t count = 1;
    for (int i = 0; i < d; ++i) count *= ni;
    p.modes = count;
    p.interior.assign(count, 0.0);
    p.real.assign(count, 0.0);
    p.forward = fftw_plan_r2r(d, dims, p.interior.data(), p.real.data(), kinds, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.backward = fftw_plan_r2r(d, dims, p.real.data(), p.interior.data(), kinds, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.norm = 1.0 / std::pow(2.0 * g.n, d);
    symbol_.resize(count);
    const double h2 = g.spacing * g.spacing;
    for (std::size_t m = 0; m < count; ++m) {
      std::size_t r = m;
      double s = 0.0;
      for (int i = d - 1; i >= 0; --i) {
        const int k = static_cast<int>(r % ni) + 1;
        r /= ni;
        const double t = std::sin(std::numbers::pi * k / (2.0 * g.n));
        s += 4.0 * t * t / h2;
      }
      symbol_[m] = s;
    }
  }
}

SpectralSolver::~SpectralSolver() {
  std::lock_guard lock(fftw_planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

void SpectralSolver::solve(double c, std::span<const double> rhs, std::span<double> out) {
  auto& p = *plans_;
  const auto& g = grid_;
  if (boundary_ == Boundary::periodic) {
    std::copy(rhs.begin(), rhs.end(), p.real.begin());
    auto* cplx = reinterpret_cast<fftw_complex*>(p.spec.data());
    fftw_execute_dft_r2c(p.forward, p.real.data(), cplx);
    for (std::size_t m = 0; m < p.modes; ++m) {
      const double den = symbol_[m] + c;
      p.spec[m] = den > 0.0 ? p.spec[m] * (p.norm / den) : std::complex<double>(0.0, 0.0);
    }
    fftw_execute_dft_c2r(p.backward, cplx, p.real.data());
    std::copy(p.real.begin(), p.real.end(), out.begin());
    return;
  }
  // Dirichlet box: gather interior sites (all coordinates >= 1).
  const std::size_t N = g.sites();
  std::size_t q = 0;
  for (std::size_t x = 0; x < N; ++x)
    if (!is_box_boundary(g, x)) p.interior[q++] = rhs[x];
  fftw_execute_r2r(p.forward, p.interior.data(), p.real.data());
  for (std::size_t m = 0; m < p.modes; ++m) p.real[m] *= p.norm / (symbol_[m] + c);
  fftw_execute_r2r(p.backward, p.real.data(), p.interior.data());
  q = 0;
  for (std::size_t x = 0; x < N; ++x) out[x] = is_box_boundary(g, x) ? 0.0 : p.interior[q++];
}

SpectralSolver& SpectralSolver::local(const PeriodicGrid& g, Boundary b) {
  using Key = std::tuple<int, int, double, int>;
  thread_local std::map<Key, std::unique_ptr<SpectralSolver>> cache;
  const Key key{g.dim, g.n, g.length, static_cast<int>(b)};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<SpectralSolver>(g, b)).first;
  return *it->second;
}

Field solve_shifted_poisson(const Field& rhs, double massive_coeff) {
  if (!(massive_coeff >= 0.0)) throw std::invalid_argument("shifted poisson: massive coefficient must be >= 0");
  const auto& g = rhs.grid();
  if (massive_coeff == 0.0) {
    const double scale = rhs.max_abs();
    for (std::size_t c = 0; c < rhs.components(); ++c)
      if (std::abs(rhs.mean(c)) > 1e-10 * scale)
        throw std::invalid_argument("shifted poisson: rhs component " + std::to_string(c) +
                                    " has non-zero mean with massive_coeff = 0");
  }
  Field out(g, rhs.shape());
  auto& solver = SpectralSolver::local(g, Boundary::periodic);
  for (std::size_t c = 0; c < rhs.components(); ++c) solver.solve(massive_coeff, rhs.component(c), out.component(c));
  return out;
}

bool is_box_boundary(const PeriodicGrid& g, std::size_t site) {
  for (int i = 0; i < g.dim; ++i)
    if ((site / g.stride(i)) % g.n == 0) return true;
  return false;
}

void apply_dirichlet_mask(const PeriodicGrid& g, std::span<double> values, std::size_t ncomp) {
  const std::size_t N = g.sites();
  for (std::size_t x = 0; x < N; ++x)
    if (is_box_boundary(g, x))
      for (std::size_t c = 0; c < ncomp; ++c) values[c * N + x] = 0.0;
}

}  // namespace homolab
