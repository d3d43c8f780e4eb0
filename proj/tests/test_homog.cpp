#include <random>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "homolab/homog.hpp"

using namespace homolab;

namespace {

ParameterField constant_medium(const PeriodicGrid& g, double w) {
  Field f(g, {1});
  for (double& v : f.values()) v = w;
  return make_parameter_field(f, 0.0);
}

ParameterField two_phase(int n) {
  const auto g = build_grid(1, n, static_cast<double>(n) / 8);
  Field w(g, {1});
  for (std::size_t x = 0; x < g.sites(); ++x) w(0, x) = (x < g.sites() / 2 ? 1.0 : -1.0) * (1 - 1e-9);
  return make_parameter_field(w, 0.0);
}

}  // namespace

TEST_CASE("periodic RVE oracles") {
  const auto g = build_grid(2, 16, 4.0);
  auto fam = make_rational_uhlenbeck(1, 2);
  const auto om = constant_medium(g, 0.4);
  const double xi[2] = {0.6, -1.1};
  double expect[2];
  const double w = 0.4;
  fam->eval(&w, xi, expect);
  const auto e = rve_periodic(om, fam, xi);
  CHECK(e.value[0] == doctest::Approx(expect[0]).epsilon(1e-14));
  CHECK(e.value[1] == doctest::Approx(expect[1]).epsilon(1e-14));
  const double zero[2] = {0, 0};
  const auto z = rve_periodic(om, fam, zero);
  CHECK(z.value[0] == 0.0);

  const double one = 1.0;
  const auto hm = rve_periodic(two_phase(4096), make_linear_midpoint(1, 1), std::span<const double>(&one, 1));
  CHECK(std::abs(hm.value[0] - 4.0 / 3.0) <= 1e-6 * 4.0 / 3.0);
}

TEST_CASE("1D oracle") {
  auto lin = make_linear_midpoint(1, 1);
  CHECK(oracle_1d(two_phase(64), *lin, 1.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-8));  // phases sit 1e-9 inside the ball
  auto rat = make_rational_uhlenbeck(1, 1);
  const auto g = build_grid(1, 64, 8.0);
  const double w = -0.3, xi = 0.7;
  double a;
  rat->eval(&w, &xi, &a);
  CHECK(oracle_1d(constant_medium(g, w), *rat, xi) == doctest::Approx(a).epsilon(1e-13));
  CHECK(invert_scalar_law(*rat, &w, a) == doctest::Approx(xi).epsilon(1e-13));

  // cross-check against the corrector solve on a sampled medium
  MediumSpec med;
  SolverOptions o;
  o.tol = 1e-12;
  for (std::uint64_t s = 1; s <= 2; ++s) {
    const auto om = med.sample(1, 512, 1.0, s);  // n = 2048
    const double q = oracle_1d(om, *rat, 1.0);
    const double one = 1.0;
    const auto e = rve_periodic(om, rat, std::span<const double>(&one, 1), o);
    CHECK(std::abs(e.value[0] - q) <= 1e-6 * std::abs(q));
  }

  // the law oracle with a degenerate clamp is the pointwise law at omega = 0
  ClampSpec flat{ClampKind::tanh_radial, 0.0};
  const double w0 = 0.0;
  rat->eval(&w0, &xi, &a);
  CHECK(oracle_1d_law(*rat, flat, xi) == doctest::Approx(a).epsilon(1e-13));
  // and it is close to a long sampled medium
  const auto big = med.sample(1, 8192, 1.0, 3);
  const double qlaw = oracle_1d_law(*rat, ClampSpec{}, 1.0);
  CHECK(oracle_1d(big, *rat, 1.0) == doctest::Approx(qlaw).epsilon(5e-3));
}

TEST_CASE("Gauss-Hermite moments") {
  const auto q = gauss_hermite_normal(40);
  double m0 = 0, m2 = 0, m4 = 0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    m0 += q.weights[i];
    m2 += q.weights[i] * q.nodes[i] * q.nodes[i];
    m4 += q.weights[i] * std::pow(q.nodes[i], 4);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("weights") {
  const auto g = build_grid(2, 64, 16.0);
  for (const char* p : {"bump", "cosine"}) {
    const Field eta = make_weight(g, {p, 0.0, {}});
    double s = 0, mn = 0;
    for (double v : eta.values()) {
      s += v;
      mn = std::min(mn, v);
    }
    CHECK(s * g.cell_volume() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(mn >= 0.0);
    const auto c = torus_center(g);
    for (std::size_t x = 0; x < g.sites(); ++x)
      if (wrap_distance(g, x, c) >= 2.0) CHECK(eta(0, x) == 0.0);
  }
  CHECK_THROWS_AS(make_weight(g, {"bump", 3.0, {}}), std::invalid_argument);
  CHECK_THROWS_AS(make_weight(g, {"box", 0.0, {}}), std::invalid_argument);
}

TEST_CASE("localized RVE") {
  auto fam = make_rational_uhlenbeck(1, 2);
  const auto g = build_grid(2, 64, 16.0);
  const double xi[2] = {1.0, 0.3};
  const auto c = rve_localized(constant_medium(g, 0.2), fam, xi, 4.0);
  double a[2];
  const double w = 0.2;
  fam->eval(&w, xi, a);
  CHECK(c.value[0] == doctest::Approx(a[0]).epsilon(1e-13));
  CHECK(c.value[1] == doctest::Approx(a[1]).epsilon(1e-13));

  MediumSpec med;
  const auto om = med.sample(2, 16.0, 1.0, 7);
  SolverOptions lo, hi;
  lo.tol = 1e-9;
  hi.tol = 1e-11;
  const auto r1 = rve_localized(om, fam, xi, 4.0, {}, lo);
  const auto r2 = rve_localized(om, fam, xi, 4.0, {}, hi);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(r1.value[i] - r2.value[i]) <= 1e-7 * std::abs(r2.value[i]));
  CHECK_THROWS_AS(rve_localized(om, fam, xi, 5.0), std::invalid_argument);  // T > (L/8)^2
  CHECK_THROWS_AS(rve_localized(om, fam, xi, 1.0), std::invalid_argument);  // T < 2 eps^2
}

TEST_CASE("structure checks") {
  auto fam = make_rational_uhlenbeck(1, 1);
  StructureConfig cfg;
  cfg.n_samples = 4;
  cfg.opts.tol = 1e-12;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int i = 0; i < 10; ++i) cfg.xi_pairs.push_back({{U(rng)}, {U(rng)}});
  cfg.xi = {0.8};
  cfg.frame_rotations = {{-1.0}};
  MediumSpec med;
  auto rep = structure_checks(fam, [&](std::uint64_t s) { return med.sample(1, 64, 1.0, s); }, cfg);
  CHECK(rep.monotone_pass);
  CHECK(rep.lipschitz_pass);
  CHECK(rep.frame_pass);
  CHECK(rep.monotone_min >= fam->lambda());

  // single constant sample: exact frame indifference for a system
  auto sys = make_rational_uhlenbeck(2, 2);
  StructureConfig c2;
  c2.n_samples = 1;
  c2.xi = {1.0, 0.2, -0.4, 0.5};
  const double t = 0.7;
  c2.frame_rotations = {{std::cos(t), -std::sin(t), std::sin(t), std::cos(t)}};
  auto r2 = structure_checks(sys, [&](std::uint64_t) { return constant_medium(build_grid(2, 8, 2.0), 0.1); }, c2);
  CHECK(r2.frame_max_dev <= 1e-12);
  CHECK(r2.frame_pass);
}

TEST_CASE("sweeps") {
  SweepConfig cfg;
  cfg.d = 1;
  cfg.epsilon = 1.0;
  cfg.L_over_eps = {16, 32, 64};
  cfg.n_samples = 8;
  cfg.xi = {1.0};
  cfg.family = make_linear_midpoint(1, 1);
  cfg.medium.clamp.gain = 0.0;  // constant medium
  const auto fl = fluctuation_experiment(cfg);
  for (const auto& lv : fl.levels) CHECK(lv.stats.sd == 0.0);
  CHECK_FALSE(fl.fit.has_value());
  const auto sy = systematic_experiment(cfg, 1.5);
  for (const auto& lv : sy.levels) CHECK(lv.bias == doctest::Approx(0.0).epsilon(1e-12));

  cfg.medium.clamp.gain = 1.0;
  const auto a = rve_sweep(cfg), b = rve_sweep(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);
  cfg.L_over_eps = {12};
  CHECK_THROWS_AS(rve_sweep(cfg), std::invalid_argument);
}
