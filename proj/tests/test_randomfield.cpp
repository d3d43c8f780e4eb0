#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "homolab/randomfield.hpp"
#include "homolab/rng.hpp"

using namespace homolab;

TEST_CASE("white noise: determinism and moments") {
  auto g = build_grid(2, 16, 2.0);
  auto a = sample_white_noise(g, 2, 99);
  auto b = sample_white_noise(g, 2, 99);
  CHECK((a - b).max_abs() == 0.0);
  CHECK((a - sample_white_noise(g, 2, 100)).max_abs() > 0.0);

  // 10^4 samples at one site: variance h^-d within 5%, mean within 3 se.
  auto g1 = build_grid(1, 8, 2.0);
  const double target = 1.0 / g1.cell_volume();
  const int S = 10000;
  double s = 0, s2 = 0;
  for (int i = 0; i < S; ++i) {
    const double v = sample_white_noise(g1, 1, seed_stream(7, i))(0, 3);
    s += v;
    s2 += v * v;
  }
  const double mean = s / S, var = s2 / S - mean * mean;
  CHECK(std::abs(var / target - 1.0) < 0.05);
  CHECK(std::abs(mean) < 3.0 * std::sqrt(target / S));
}

TEST_CASE("white noise: distinct sites uncorrelated") {
  auto g = build_grid(1, 8, 1.0);
  const int S = 4000;
  double c = 0;
  for (int i = 0; i < S; ++i) {
    auto W = sample_white_noise(g, 1, seed_stream(3, i));
    c += W(0, 1) * W(0, 5);
  }
  const double v = 1.0 / g.cell_volume();
  CHECK(std::abs(c / S) < 4.0 * v / std::sqrt(S));
}

TEST_CASE("gaussian_field: resolution rule, delta kernel, periodicity") {
  auto g = build_grid(1, 64, 1.0);
  CHECK_THROWS_AS(gaussian_field(Field(g, {1}), KernelSpec{KernelShape::gaussian_bump, 2 * g.spacing, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian_field(Field(g, {1}), KernelSpec{KernelShape::gaussian_bump, 0.3, 1}),
                  std::invalid_argument);
  auto W = sample_white_noise(g, 1, 5);
  auto Y = gaussian_field(W, KernelSpec{KernelShape::delta, 0.0, 1});
  const double norm = std::sqrt(g.cell_volume());
  for (std::size_t x = 0; x < g.sites(); ++x) CHECK(Y(0, x) == doctest::Approx(norm * W(0, x)).epsilon(1e-10));
  // exact periodicity: index n wraps to 0
  auto Y2 = gaussian_field(W, KernelSpec{KernelShape::bump_compact, 0.1, 1});
  CHECK(Y2(0, g.index({64, 0, 0})) == Y2(0, 0));
}

TEST_CASE("gaussian_field: covariance matches kernel autocorrelation") {
  auto g = build_grid(1, 64, 1.0);
  const KernelSpec ks{KernelShape::gaussian_bump, 8 * g.spacing, 1};
  CHECK(kernel_autocorrelation(g, ks, 0) == doctest::Approx(1.0).epsilon(1e-12));
  const int S = 1000;
  for (int lag : {0, 2, 5}) {
    std::vector<double> p(S);
    for (int i = 0; i < S; ++i) {
      auto Y = gaussian_field(sample_white_noise(g, 1, seed_stream(11, i)), ks);
      p[i] = Y(0, 0) * Y(0, lag);
    }
    double m = 0, m2 = 0;
    for (double v : p) m += v;
    m /= S;
    for (double v : p) m2 += (v - m) * (v - m);
    const double se = std::sqrt(m2 / (S - 1) / S);
    CHECK(std::abs(m - kernel_autocorrelation(g, ks, lag)) < 3.0 * se);
  }
}

TEST_CASE("clamp_to_ball") {
  auto g = build_grid(2, 8, 1.0);
  Field zero(g, {2});
  auto w = clamp_to_ball(zero, ClampSpec{ClampKind::tanh_radial, 1.0});
  CHECK(w.values.max_abs() == 0.0);

  Field big(g, {1});
  for (std::size_t x = 0; x < g.sites(); ++x) big(0, x) = (x % 2 ? 1.0 : -1.0) * 50.0 * x;
  auto h = clamp_to_ball(big, ClampSpec{ClampKind::half_tanh, 1.0});
  for (double v : h.values.values()) {
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  for (auto kind : {ClampKind::tanh_radial, ClampKind::affine_clip}) {
    auto c = clamp_to_ball(big, ClampSpec{kind, 1.0});
    CHECK(c.values.max_abs() <= kBallRadius);
  }

  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 3.0);
  for (auto kind : {ClampKind::tanh_radial, ClampKind::affine_clip}) {
    const ClampSpec cs{kind, 1.0};
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      double a[2] = {N(rng), N(rng)}, b[2] = {N(rng), N(rng)};
      const double dab = std::hypot(a[0] - b[0], a[1] - b[1]);
      cs.apply(a, 2);
      cs.apply(b, 2);
      worst = std::max(worst, std::hypot(a[0] - b[0], a[1] - b[1]) / dab);
    }
    CHECK(worst <= 1.0 + 1e-12);
  }
}

TEST_CASE("sample_parameter_field: determinism and unit ball") {
  auto g = build_grid(2, 32, 1.0);
  const KernelSpec ks{KernelShape::gaussian_bump, 0.2, 1};
  const ClampSpec cs{ClampKind::tanh_radial, 1.0};
  auto a = sample_parameter_field(g, ks, cs, 17);
  auto b = sample_parameter_field(g, ks, cs, 17);
  CHECK((a.values - b.values).max_abs() == 0.0);
  CHECK(a.values.max_abs() < 1.0);
  CHECK(a.lineage_json().find("gaussian-bump") != std::string::npos);
}

TEST_CASE("white noise: low modes shared across refinement") {
  // The averages over cells of side L/4 are determined by low modes only up
  // to aliasing; equal seed yields strongly correlated coarse averages.
  auto g1 = build_grid(1, 16, 1.0), g2 = build_grid(1, 32, 1.0);
  const KernelSpec k1{KernelShape::gaussian_bump, 0.25, 1};
  auto y1 = gaussian_field(sample_white_noise(g1, 1, 8), k1);
  auto y2 = gaussian_field(sample_white_noise(g2, 1, 8), k1);
  double diff = 0;
  for (std::size_t x = 0; x < g1.sites(); ++x) diff = std::max(diff, std::abs(y1(0, x) - y2(0, 2 * x)));
  CHECK(diff < 0.5);
}

TEST_CASE("restrict_pi_L") {
  auto g = build_grid(1, 64, 1.0);
  Field v(g, {1});
  for (double& x : v.values()) x = 0.5;
  auto w = make_parameter_field(v, 0.1);
  auto r = restrict_pi_L(w, 1.0);
  // center 0.5; distance 0.2 -> site at 0.7, distance 0.3 -> site at 0.8
  CHECK(r.values(0, g.index({static_cast<int>(0.7 * 64 + 0.5), 0, 0})) == 0.5);
  CHECK(r.values(0, g.index({static_cast<int>(0.8 * 64 + 0.5), 0, 0})) == 0.0);
  auto rr = restrict_pi_L(r, 1.0);
  CHECK((rr.values - r.values).max_abs() == 0.0);
  CHECK_THROWS_AS(make_parameter_field(Field(g, {1}, std::vector<double>(64, 1.0))), std::invalid_argument);
}

TEST_CASE("stationarity in law") {
  auto g = build_grid(1, 32, 1.0);
  const KernelSpec ks{KernelShape::gaussian_bump, 0.125, 1};
  const ClampSpec cs{ClampKind::tanh_radial, 1.0};
  const int S = 500;
  std::vector<double> s(g.sites(), 0.0), s2(g.sites(), 0.0);
  for (int i = 0; i < S; ++i) {
    auto w = sample_parameter_field(g, ks, cs, seed_stream(21, i));
    for (std::size_t x = 0; x < g.sites(); ++x) {
      s[x] += w.values(0, x);
      s2[x] += w.values(0, x) * w.values(0, x);
    }
  }
  int bad = 0;
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const double m = s[x] / S, se = std::sqrt((s2[x] / S - m * m) / S);
    bad += std::abs(m) > 3 * se;
  }
  CHECK(bad <= 3);  // ~0.3% false alarms per site expected
}

TEST_CASE("periodization consistency: one-point and lag statistics on L and 2L tori") {
  const KernelSpec ks{KernelShape::gaussian_bump, 0.125, 1};
  const ClampSpec cs{ClampKind::tanh_radial, 1.0};
  auto gL = build_grid(1, 32, 1.0), g2L = build_grid(1, 64, 2.0);
  const int S = 600;
  auto stats = [&](const PeriodicGrid& g, std::uint64_t base) {
    std::array<double, 4> m{0, 0, 0, 0};  // mean, second moment, lag-2 product, its square
    const auto c = g.index({g.n / 2, 0, 0});
    for (int i = 0; i < S; ++i) {
      auto w = sample_parameter_field(g, ks, cs, seed_stream(base, i));
      const double a = w.values(0, c), b = w.values(0, g.shift(c, 0, 2));
      m[0] += a;
      m[1] += a * a;
      m[2] += a * b;
      m[3] += a * b * a * b;
    }
    for (double& v : m) v /= S;
    return m;
  };
  auto a = stats(gL, 1), b = stats(g2L, 2);
  const double se_var = std::sqrt(2.0 * a[1] * a[1] / S);
  CHECK(std::abs(a[1] - b[1]) < 3 * std::sqrt(2.0) * se_var);
  const double se_lag = std::sqrt((a[3] - a[2] * a[2]) / S + (b[3] - b[2] * b[2]) / S);
  CHECK(std::abs(a[2] - b[2]) < 3 * se_lag);
}

TEST_CASE("spectral gap ratio") {
  auto g = build_grid(1, 128, 4.0);
  const ClampSpec cs{ClampKind::tanh_radial, 1.0};
  const double eps = 0.125;
  FieldSampler constant = [&](std::uint64_t) {
    Field v(g, {1});
    for (double& x : v.values()) x = 0.3;
    return make_parameter_field(v, eps);
  };
  CHECK(empirical_spectral_gap_ratio(constant, eps, eps, 100, 1).ratio == 0.0);
  CHECK_THROWS_AS(empirical_spectral_gap_ratio(constant, eps, eps, 99, 1), std::invalid_argument);

  FieldSampler rnd = [&](std::uint64_t s) {
    return sample_parameter_field(g, KernelSpec{KernelShape::gaussian_bump, eps, 1}, cs, s);
  };
  auto e1 = empirical_spectral_gap_ratio(rnd, 4 * eps, eps, 800, 3);
  auto e2 = empirical_spectral_gap_ratio(rnd, 8 * eps, eps, 800, 4);
  CHECK(e1.ratio > 0.05);
  CHECK(e1.ratio < 20.0);
  // doubling r divides the variance by ~2^d
  const double se = std::hypot(e1.variance_se / 2, e2.variance_se);
  CHECK(std::abs(e1.variance / 2 - e2.variance) < 3 * se);
}
