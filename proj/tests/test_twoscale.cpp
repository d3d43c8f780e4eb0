#include <cmath>

#include "doctest.h"
#include "homolab/twoscale.hpp"

using namespace homolab;

TEST_CASE("partition sums to one") {
  for (int d : {1, 2}) {
    auto g = build_grid(d, d == 1 ? 256 : 64, 1.0);
    const auto pu = build_partition(g, 1.0 / 8);
    CHECK(pu.nodes.size() == static_cast<std::size_t>(std::pow(8, d)));
    CHECK(pu.sum_defect() < 1e-12);
    CHECK(pu.max_overlap <= std::pow(2, d));
    CHECK(pu.gradient_constant < 2.0 * std::sqrt(d));
    CHECK(pu.gradient_constant > 0.5);
  }
  auto g = build_grid(2, 64, 1.0);
  const auto box = build_partition(g, 1.0 / 8, false);
  CHECK(box.nodes.size() == 81);
  CHECK(box.sum_defect() < 1e-12);
  CHECK_THROWS(build_partition(g, 1.0 / 32));     // below 4h
  CHECK_THROWS(build_partition(g, 0.3));          // does not divide L
}

TEST_CASE("local slopes reproduce constants and average") {
  auto g = build_grid(2, 64, 1.0);
  const auto pu = build_partition(g, 1.0 / 4);
  Field G(g, {1, 2});
  for (std::size_t x = 0; x < g.sites(); ++x) {
    G(0, x) = 0.3;
    G(1, x) = -1.1;
  }
  for (const auto& xi : local_slopes(G, pu)) {
    CHECK(xi[0] == doctest::Approx(0.3).epsilon(1e-13));
    CHECK(xi[1] == doctest::Approx(-1.1).epsilon(1e-13));
  }
}

TEST_CASE("one slope: single corrector, residual vanishes") {
  const auto fam = make_family("linear:exp", 1, 1, {{"kappa", 1.0}});
  MediumSpec med;
  const auto omega = med.sample(1, 32.0, 1.0, 7);
  const auto& g = omega.grid();
  const auto pu = build_partition(g, 2.0);
  SolverOptions so;
  so.tol = 1e-12;
  const double ahom = rve_periodic(omega, fam, std::vector<double>{1.0}, so).value[0];
  const auto law = linear_effective_law(1, 1, {ahom}, "test");
  TwoScaleOptions to;
  to.solver = so;
  to.background_slope = {0.7};
  const auto ex = two_scale_expand(Field(g, {1}), pu, omega, fam, law, to);
  REQUIRE(ex.failures.empty());
  CHECK(ex.correctors.size() == 1);
  CHECK(ex.R.max_abs() < 1e-9);
  CHECK(ex.C_hat_sum < 1e-12);
  CHECK(ex.equation_residual < 1e-9);
}

TEST_CASE("deduplication does not change the expansion") {
  const auto fam = make_rational_uhlenbeck(1, 1);
  MediumSpec med;
  const auto omega = med.sample(1, 16.0, 1.0, 3);
  const auto& g = omega.grid();
  const auto pu = build_partition(g, 2.0);
  const auto law = tabulated_effective_law_1d(*fam, med.clamp, 4.0, 65);
  // triangle wave: slopes +-1 away from the kinks, so classes repeat
  Field u(g, {1});
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const double p = g.position(x)[0];
    u(0, x) = p < 8.0 ? p : 16.0 - p;
  }
  TwoScaleOptions a, b;
  a.solver.tol = b.solver.tol = 1e-12;
  b.deduplicate = false;
  const auto ea = two_scale_expand(u, pu, omega, fam, law, a);
  const auto eb = two_scale_expand(u, pu, omega, fam, law, b);
  REQUIRE(ea.failures.empty());
  REQUIRE(eb.failures.empty());
  CHECK(eb.correctors.size() == pu.nodes.size());
  CHECK(ea.correctors.size() < pu.nodes.size());
  CHECK((ea.u_hat - eb.u_hat).max_abs() < 1e-12);
  CHECK((ea.R - eb.R).max_abs() < 1e-12);
  CHECK(ea.C_hat_sum == doctest::Approx(eb.C_hat_sum).epsilon(1e-10));
  CHECK(std::isfinite(ea.C_hat_max));
  CHECK(ea.equation_residual < 0.5);
}

TEST_CASE("tabulated 1d law matches the quadrature law") {
  const auto fam = make_rational_uhlenbeck(1, 1);
  ClampSpec clamp;
  const auto law = tabulated_effective_law_1d(*fam, clamp, 3.0, 129);
  for (double xi : {-2.9, -1.3, 0.0, 0.37, 2.5}) {
    double q = 0.0;
    law.eval(&xi, &q);
    CHECK(q == doctest::Approx(oracle_1d_law(*fam, clamp, xi)).epsilon(1e-7));
  }
  double zero = 0.0, q0 = 1.0;
  law.eval(&zero, &q0);
  CHECK(std::abs(q0) < 1e-12);
}

TEST_CASE("homogenization: constant medium is exact up to discretization") {
  const auto fam = make_family("linear:exp", 1, 1, {{"kappa", 1.0}});
  MediumSpec med;
  med.clamp.gain = 0.0;  // omega = 0
  HomogenizationConfig cfg;
  cfg.d = 1;
  cfg.L = 1.0;
  cfg.eps_over_L = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  cfg.n_samples = 2;
  cfg.family = fam;
  cfg.medium = med;
  cfg.opts.tol = 1e-12;
  const auto law = linear_effective_law(1, 1, {1.0}, "constant");
  const auto res = homogenization_error_experiment(cfg, law);
  for (const auto& r : res.rows) {
    CHECK(r.error.empty());
    CHECK(r.l2_error < 1e-9);
    CHECK(r.grad_norm <= 1.05 * r.grad_bound);
  }
  CHECK_FALSE(res.fit.has_value());
}

TEST_CASE("homogenization rows are deterministic and audited") {
  const auto fam = make_rational_uhlenbeck(1, 1);
  MediumSpec med;
  HomogenizationConfig cfg;
  cfg.d = 1;
  cfg.L = 1.0;
  cfg.eps_over_L = {1.0 / 8, 1.0 / 16, 1.0 / 32};
  cfg.n_samples = 3;
  cfg.family = fam;
  cfg.medium = med;
  cfg.two_scale_diagnostic = true;
  const auto law = tabulated_effective_law_1d(*fam, med.clamp, 10.0, 129);
  const auto a = homogenization_error_experiment(cfg, law);
  const auto b = homogenization_error_experiment(cfg, law);
  REQUIRE(a.rows.size() == 9);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].error.empty());
    CHECK(a.rows[i].l2_error == b.rows[i].l2_error);
    CHECK(a.rows[i].grad_norm <= 1.05 * a.rows[i].grad_bound);
    CHECK(std::isfinite(a.rows[i].h1_two_scale));
  }
  REQUIRE(a.fit.has_value());
  CHECK(a.fit->slope > 0.2);  // d = 1 rate is eps^{1/2}; three levels, three seeds
}

TEST_CASE("local slope bounds on a smooth gradient") {
  const auto g = build_grid(2, 64, 1.0);
  const auto pu = build_partition(g, 1.0 / 8);
  const Field G = apply_gradient(macroscopic_profile(g, "mode"));
  const auto xi = local_slopes(G, pu);
  const Field H = apply_gradient(G);
  const double hd = g.cell_volume(), delta = pu.delta;
  double worst_size = 0.0, worst_diff = 0.0;
  for (std::size_t k = 0; k < pu.nodes.size(); ++k) {
    double s = 0.0;
    for (auto x : lattice_ball(g, pu.nodes[k].center, 2 * delta))
      s += (G(0, x) * G(0, x) + G(1, x) * G(1, x)) * hd;
    worst_size = std::max(worst_size, std::hypot(xi[k][0], xi[k][1]) / std::sqrt(s / std::pow(delta, 2)));
    double s6 = 0.0;
    for (auto x : lattice_ball(g, pu.nodes[k].center, 6 * delta))
      for (int c = 0; c < 4; ++c) s6 += H(c, x) * H(c, x) * hd;
    const double rhs = std::sqrt(s6 / std::pow(delta, 2));
    for (auto j : pu.neighbors(k))
      worst_diff = std::max(worst_diff, std::hypot(xi[k][0] - xi[j][0], xi[k][1] - xi[j][1]) / delta / rhs);
  }
  MESSAGE("slope constants: size ", worst_size, " difference ", worst_diff);
  CHECK(worst_size < 4.0);
  CHECK(worst_diff < 4.0);
}

TEST_CASE("u_hat is u_hom plus the recentered correctors") {
  const auto fam = make_rational_uhlenbeck(1, 1);
  MediumSpec med;
  const auto omega = med.sample(1, 16.0, 1.0, 5);
  const auto& g = omega.grid();
  const auto pu = build_partition(g, 2.0);
  const auto law = tabulated_effective_law_1d(*fam, med.clamp, 4.0, 65);
  Field u = macroscopic_profile(g, "mode", 1, 3.0);
  for (const char* mode : {"class", "local", "none"}) {
    TwoScaleOptions o;
    o.recenter = mode;
    const auto ex = two_scale_expand(u, pu, omega, fam, law, o);
    REQUIRE(ex.failures.empty());
    Field v = u;
    for (std::size_t k = 0; k < pu.nodes.size(); ++k) {
      const auto& set = ex.correctors[ex.corrector_of[k]];
      const Field eta = pu.dense(k);
      for (std::size_t x = 0; x < g.sites(); ++x) v(0, x) += eta(0, x) * (set.phi(0, x) - ex.phi_offset[k][0]);
    }
    CHECK((v - ex.u_hat).max_abs() < 1e-12);
  }
  TwoScaleOptions bad;
  bad.recenter = "median";
  CHECK_THROWS(two_scale_expand(u, pu, omega, fam, law, bad));
}
