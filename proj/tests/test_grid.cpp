#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <sstream>

#include "doctest.h"
#include "homolab/field_io.hpp"
#include "homolab/grid.hpp"
#include "homolab/kernels.hpp"
#include "homolab/spectral.hpp"

using namespace homolab;

namespace {

Field random_field(const PeriodicGrid& g, Shape shape, std::uint64_t seed) {
  Field f(g, std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  for (double& v : f.values()) v = N(rng);
  return f;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("build_grid") {
  auto g = build_grid(1, 8, 1.0);
  CHECK(g.spacing == 0.125);
  auto g2 = build_grid(2, 4, 2.0);
  CHECK(g2.sites() == 16);
  CHECK(g2.spacing == 0.5);
  CHECK_THROWS_AS(build_grid(3, 3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 8, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(4, 8, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(build_grid(1, 2, 1.0), std::invalid_argument);
}

TEST_CASE("periodic indexing wraps") {
  auto g = build_grid(2, 8, 1.0);
  const auto s = g.index({7, 0, 0});
  CHECK(g.shift(s, 0, 1) == g.index({0, 0, 0}));
  CHECK(g.shift(s, 1, -1) == g.index({7, 7, 0}));
  CHECK(g.index({-1, 9, 0}) == g.index({7, 1, 0}));
}

TEST_CASE("gradient of constant and of a Fourier mode") {
  auto g = build_grid(1, 32, 3.0);
  Field c(g, {1});
  for (double& v : c.values()) v = 2.5;
  CHECK(apply_gradient(c).max_abs() == 0.0);

  Field u(g, {1});
  const double L = g.length, h = g.spacing, pi = std::numbers::pi;
  for (std::size_t x = 0; x < g.sites(); ++x) u(0, x) = std::sin(2 * pi * g.position(x)[0] / L);
  auto du = apply_gradient(u);
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const double xx = g.position(x)[0];
    const double expect = (2.0 / h) * std::sin(pi * h / L) * std::cos(2 * pi * (xx + h / 2) / L);
    CHECK(du(0, x) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("adjointness and negative semidefiniteness, d = 1,2,3") {
  for (int d = 1; d <= 3; ++d) {
    auto g = build_grid(d, d == 3 ? 8 : 16, 1.7);
    for (int t = 0; t < 20; ++t) {
      auto u = random_field(g, {2}, 100 * d + t);
      auto v = random_field(g, {2, d}, 7000 + 100 * d + t);
      const double lhs = inner(apply_gradient(u), v);
      const double rhs = inner(u, apply_divergence(v));
      const double scale = std::sqrt(inner(apply_gradient(u), apply_gradient(u)) * inner(v, v));
      CHECK(std::abs(lhs + rhs) <= 1e-12 * scale);
      CHECK(inner(apply_divergence(apply_gradient(u)), u) <= 0.0);
    }
  }
}

TEST_CASE("divergence of gradient is the 2d+1-point Laplacian; sum telescopes") {
  for (int d = 1; d <= 3; ++d) {
    auto g = build_grid(d, 8, 1.0);
    auto u = random_field(g, {1}, 11 + d);
    auto lap = apply_divergence(apply_gradient(u));
    const double h2 = g.spacing * g.spacing;
    double sum = 0.0;
    for (std::size_t x = 0; x < g.sites(); ++x) {
      double s = -2.0 * d * u(0, x);
      for (int i = 0; i < d; ++i) s += u(0, g.shift(x, i, 1)) + u(0, g.shift(x, i, -1));
      CHECK(std::abs(lap(0, x) - s / h2) <= 1e-12 * (std::abs(s / h2) + 1.0) * 10);
      sum += lap(0, x);
    }
    CHECK(std::abs(sum) <= 1e-9);
    Field c(g, {1, d});
    for (double& v : c.values()) v = 3.0;
    CHECK(apply_divergence(c).max_abs() == 0.0);
  }
}

TEST_CASE("divergence rejects wrong shape") {
  auto g = build_grid(2, 8, 1.0);
  Field F(g, {1, 3});
  CHECK_THROWS_AS(apply_divergence(F), std::invalid_argument);
}

TEST_CASE("shifted Poisson: zero, single mode, constant, round trip") {
  auto g = build_grid(2, 16, 2.0);
  Field zero(g, {1});
  CHECK(solve_shifted_poisson(zero, 0.0).max_abs() == 0.0);

  const double T = 4.0, pi = std::numbers::pi;
  const std::array<int, 3> k{3, 5, 0};
  Field mode(g, {1});
  for (std::size_t x = 0; x < g.sites(); ++x) {
    auto c = g.coords(x);
    mode(0, x) = std::cos(2 * pi * (k[0] * c[0] + k[1] * c[1]) / g.n);
  }
  auto sol = solve_shifted_poisson(mode, 1.0 / T);
  const double amp = 1.0 / (laplacian_symbol(g, k) + 1.0 / T);
  for (std::size_t x = 0; x < g.sites(); ++x) CHECK(sol(0, x) == doctest::Approx(amp * mode(0, x)).epsilon(1e-12));

  Field cst(g, {1});
  for (double& v : cst.values()) v = 0.7;
  auto sc = solve_shifted_poisson(cst, 1.0 / T);
  for (double v : sc.values()) CHECK(v == doctest::Approx(T * 0.7).epsilon(1e-12));
  CHECK_THROWS_AS(solve_shifted_poisson(cst, 0.0), std::invalid_argument);

  for (double c : {0.0, 0.3}) {
    auto f = random_field(g, {2}, 5);
    if (c == 0.0)
      for (std::size_t comp = 0; comp < 2; ++comp) {
        const double m = f.mean(comp);
        for (double& v : f.component(comp)) v -= m;
      }
    auto u = solve_shifted_poisson(f, c);
    Field Au(g, {2});
    kernels::shifted_laplacian(g, 2, c, u.values(), Au.values());
    CHECK((Au - f).l2_norm() <= 1e-10 * f.l2_norm());
    if (c == 0.0) CHECK(std::abs(u.mean(0)) < 1e-12);
  }
}

TEST_CASE("Dirichlet box spectral solve inverts the pinned stencil") {
  for (int d = 1; d <= 3; ++d) {
    auto g = build_grid(d, 8, 1.0);
    auto f = random_field(g, {1}, 77 + d);
    apply_dirichlet_mask(g, f.values(), 1);
    Field u(g, {1});
    SpectralSolver::local(g, Boundary::dirichlet_box).solve(0.0, f.values(), u.values());
    Field Au(g, {1});
    kernels::shifted_laplacian(g, 1, 0.0, u.values(), Au.values());
    apply_dirichlet_mask(g, Au.values(), 1);
    CHECK((Au - f).l2_norm() <= 1e-10 * f.l2_norm());
    for (std::size_t x = 0; x < g.sites(); ++x)
      if (is_box_boundary(g, x)) CHECK(u(0, x) == 0.0);
  }
}

TEST_CASE("translation equivariance") {
  auto g = build_grid(2, 16, 1.0);
  auto u = random_field(g, {1}, 3);
  for (int axis = 0; axis < 2; ++axis) {
    auto a = translate(apply_gradient(u), axis, 1);
    auto b = apply_gradient(translate(u, axis, 1));
    CHECK((a - b).max_abs() == 0.0);
    auto F = random_field(g, {1, 2}, 4);
    CHECK((translate(apply_divergence(F), axis, 1) - apply_divergence(translate(F, axis, 1))).max_abs() == 0.0);
  }
}

TEST_CASE("serial and OpenMP kernels agree") {
  for (int d = 1; d <= 3; ++d) {
    auto g = build_grid(d, d == 3 ? 16 : 64, 1.0);
    auto u = random_field(g, {2}, 9 + d);
    auto F = random_field(g, {2, d}, 19 + d);
    std::vector<double> a(2 * d * g.sites()), b(a.size());
    kernels::serial::gradient(g, 2, u.values(), a);
    kernels::omp::gradient(g, 2, u.values(), b);
    CHECK(a == b);
    std::vector<double> c(2 * g.sites()), e(c.size());
    kernels::serial::divergence(g, 2, F.values(), c);
    kernels::omp::divergence(g, 2, F.values(), e);
    CHECK(c == e);
    for (int axis = 0; axis < d; ++axis) {
      kernels::serial::centered(g, 2, axis, u.values(), c);
      kernels::omp::centered(g, 2, axis, u.values(), e);
      CHECK(c == e);
    }
    kernels::serial::shifted_laplacian(g, 2, 0.5, u.values(), c);
    kernels::omp::shifted_laplacian(g, 2, 0.5, u.values(), e);
    CHECK(c == e);
    const double s1 = kernels::serial::energy_inner(g, 2, 0.5, u.values(), u.values());
    const double s2 = kernels::omp::energy_inner(g, 2, 0.5, u.values(), u.values());
    CHECK(rel(s1, s2) < 1e-13);
    CHECK(rel(kernels::serial::dot(u.values(), u.values()), kernels::omp::dot(u.values(), u.values())) < 1e-13);
    // energy inner product equals -<D-.D+ u, u> + c|u|^2
    kernels::serial::shifted_laplacian(g, 2, 0.5, u.values(), c);
    CHECK(rel(s1, kernels::serial::dot(c, u.values())) < 1e-11);
    std::vector<double> coef(g.sites() * 4);
    std::mt19937_64 rng(1);
    for (double& v : coef) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    kernels::serial::site_matvec(g.sites(), 2, 2, coef, u.values(), c);
    kernels::omp::site_matvec(g.sites(), 2, 2, coef, u.values(), e);
    CHECK(c == e);
  }
}

TEST_CASE("snapshot round trip and csv") {
  auto g = build_grid(2, 8, 1.5);
  auto f = random_field(g, {1, 2}, 42);
  std::stringstream ss;
  write_snapshot(ss, f);
  CHECK(ss.str().size() == kSnapshotHeaderBytes + 8 * f.values().size());
  CHECK(ss.str().substr(0, 4) == "HLF1");
  auto r = read_snapshot(ss);
  CHECK(r.grid() == g);
  CHECK(r.shape() == f.shape());
  CHECK((r - f).max_abs() == 0.0);
  std::stringstream csv;
  write_field_csv(csv, f);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "site,x0,x1,v0,v1");
}
