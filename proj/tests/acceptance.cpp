// Acceptance suite: one PASS/FAIL line per criterion, exit status = number of failures.
// Rate experiments run the shipped configs through the harness, so the thresholds
// here and in `homolab run --check` are the same numbers.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "homolab/harness.hpp"
#include "homolab/rng.hpp"

#ifndef HOMOLAB_CONFIG_DIR
#define HOMOLAB_CONFIG_DIR "configs"
#endif

using namespace homolab;

namespace {

struct Line {
  bool pass = true;
  std::ostringstream detail;
  void part(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [fail]");
  }
};

std::filesystem::path out_root = "acceptance_out";

RunResult run_config(const std::string& name) {
  const auto dir = std::filesystem::path(HOMOLAB_CONFIG_DIR);
  RunOptions o;
  o.out_dir = out_root / name;
  o.reference_table = dir / "references.json";
  return run_experiment(parse_experiment(load_config_file(dir / (name + ".toml"))), o);
}

void config_parts(Line& l, const std::string& name) {
  const auto r = run_config(name);
  for (const auto& c : r.checks) l.part(c.pass, name + ": " + c.detail);
  l.part(r.task_failures.empty(), name + ": " + std::to_string(r.task_failures.size()) + " failed tasks");
}

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

ParameterField smooth(const PeriodicGrid& g, std::uint64_t seed, double eps) {
  return sample_parameter_field(g, KernelSpec{KernelShape::gaussian_bump, eps, 1}, ClampSpec{}, seed);
}

// --- criteria ---------------------------------------------------------------

void ac1(Line& l) {
  const auto g = build_grid(1, 4096, 512.0);
  Field w(g, {1});
  for (std::size_t x = 0; x < g.sites(); ++x) w(0, x) = (x < g.sites() / 2 ? 1.0 : -1.0) * kBallRadius;
  const auto om = make_parameter_field(w, 0.0);
  const double xi = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = rve_periodic(om, make_linear_midpoint(1, 1), std::span<const double>(&xi, 1));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rel = std::abs(r.value[0] - 4.0 / 3.0) / (4.0 / 3.0);
  l.part(rel <= 1e-6, fmt("relative error %.2e <= 1e-6", rel));
  l.part(secs < 1.0, fmt("runtime %.3f s < 1 s", secs));
}

void ac2(Line& l) {
  const auto fam = make_rational_uhlenbeck(1, 1);
  MediumSpec med;
  SolverOptions o;
  o.tol = 1e-12;
  double worst = 0.0;
  const double xi = 1.0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto om = med.sample(1, 512.0, 1.0, seed_stream(2024, s));  // n = 2048
    const double a = rve_periodic(om, fam, std::span<const double>(&xi, 1), o).value[0];
    const double b = oracle_1d(om, *fam, xi);
    worst = std::max(worst, std::abs(a - b) / std::abs(b));
  }
  l.part(worst <= 1e-5, fmt("max relative gap over 5 seeds %.2e <= 1e-5", worst));
}

void ac3(Line& l) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  double adj = 0.0, lap = 0.0;
  for (int d = 1; d <= 3; ++d) {
    const auto g = build_grid(d, d == 3 ? 8 : 32, 1.7);
    Field u(g, {2}), v(g, {2, d});
    for (double& x : u.values()) x = N(rng);
    for (double& x : v.values()) x = N(rng);
    const double scale = apply_gradient(u).l2_norm() * v.l2_norm() / g.cell_volume();
    adj = std::max(adj, std::abs(inner(apply_gradient(u), v) + inner(u, apply_divergence(v))) / scale);
    const Field L = apply_divergence(apply_gradient(u));
    double err = 0.0, ref = 0.0;
    for (int c = 0; c < 2; ++c)
      for (std::size_t x = 0; x < g.sites(); ++x) {
        double s = -2.0 * d * u(c, x);
        for (int i = 0; i < d; ++i) s += u(c, g.shift(x, i, 1)) + u(c, g.shift(x, i, -1));
        s /= g.spacing * g.spacing;
        err = std::max(err, std::abs(L(c, x) - s));
        ref = std::max(ref, std::abs(s));
      }
    lap = std::max(lap, err / ref);
  }
  l.part(adj <= 1e-12, fmt("adjointness %.1e", adj));
  l.part(lap <= 1e-12, fmt("Laplacian factorization %.1e", lap));

  SolverOptions o;
  o.tol = 1e-12;
  const double xi[2] = {1.0, 0.5};
  double errs[2];
  bool skew = true;
  for (int i = 0; i < 2; ++i) {
    const auto g = build_grid(2, 64 << i, 8.0);
    auto set = solve_periodic_corrector(smooth(g, 21, 2.0), make_rational_uhlenbeck(1, 2), xi, o);
    build_flux_corrector(set);
    for (std::size_t x = 0; x < g.sites(); ++x)
      skew = skew && set.sigma(0, x) == 0.0 && set.sigma(3, x) == 0.0 && set.sigma(1, x) == -set.sigma(2, x);
    errs[i] = set.sigma_identity_error;
  }
  l.part(skew, "sigma skew exactly");
  const double ratio = errs[0] / errs[1];
  l.part(ratio >= 1.5 && ratio <= 2.5,
         fmt("divergence identity %.3g", errs[0]) + fmt(" -> %.3g", errs[1]) + fmt(", ratio %.2f in [1.5, 2.5]", ratio));
}

void ac4(Line& l) {
  SolverOptions o;
  o.tol = 1e-13;
  for (int d : {1, 2}) {
    for (double T : {kInfiniteT, 16.0}) {
      const auto g = d == 1 ? build_grid(1, 128, 32.0) : build_grid(2, 32, 8.0);
      const auto med = smooth(g, 8, 1.0);
      auto fam = make_rational_uhlenbeck(1, d);
      std::vector<double> xi = d == 1 ? std::vector<double>{0.8} : std::vector<double>{0.8, -0.3};
      std::vector<double> Xi = d == 1 ? std::vector<double>{0.6} : std::vector<double>{0.2, 0.5};
      auto solve = [&](const std::vector<double>& s, const Field* init) {
        return std::isinf(T) ? solve_periodic_corrector(med, fam, s, o, init)
                              : solve_localized_corrector(med, fam, s, T, o, init);
      };
      const auto base = solve(xi, nullptr);
      const auto lin = solve_linearized_corrector(base, Xi, false, o);
      double errs[2];
      int i = 0;
      for (double step : {1e-2, 5e-3}) {
        auto xp = xi;
        for (std::size_t a = 0; a < xp.size(); ++a) xp[a] += step * Xi[a];
        Field fd = solve(xp, &base.phi).phi - base.phi;
        fd *= 1.0 / step;
        errs[i++] = (fd - lin.phi).l2_norm() / lin.phi.l2_norm();
      }
      const double ratio = errs[0] / errs[1];
      l.part(ratio >= 1.5 && ratio <= 3.0, "d=" + std::to_string(d) + (std::isinf(T) ? " T=inf" : " T=16") +
                                               fmt(" ratio %.3f in [1.5, 3]", ratio));
    }
  }
}

void ac12(Line& l) {
  SolverOptions so;
  so.tol = 1e-10;
  {
    const auto fam = make_linear_exp(1, 1, 1.0);
    MediumSpec med;
    const auto om = med.sample(1, 32.0, 1.0, 7);
    const auto pu = build_partition(om.grid(), 2.0);
    const double one = 1.0;
    const double ahom = rve_periodic(om, fam, std::span<const double>(&one, 1), so).value[0];
    TwoScaleOptions to;
    to.solver = so;
    to.background_slope = {0.7};
    const auto ex = two_scale_expand(Field(om.grid(), {1}), pu, om, fam, linear_effective_law(1, 1, {ahom}, "rve"), to);
    const double r = ex.R.max_abs() / 0.7;
    l.part(ex.failures.empty() && r <= 10 * so.tol, fmt("one-slope max|R|/|xi| %.1e", r) + fmt(" <= 10 tol = %.0e", 10 * so.tol));
    l.part(ex.equation_residual <= 10 * so.tol, fmt("one-slope equation residual %.1e", ex.equation_residual));
  }
  const auto fam = make_rational_uhlenbeck(1, 1);
  MediumSpec med;
  const auto law = tabulated_effective_law_1d(*fam, med.clamp, 20.0);
  double C[2];
  for (int i = 0; i < 2; ++i) {
    med.resolution = 4 << i;
    const auto om = med.sample(1, 1.0, 1.0 / 32, 11);
    const auto pu = build_partition(om.grid(), 1.0 / 16);
    TwoScaleOptions to;
    to.solver.tol = 1e-12;
    const auto ex = two_scale_expand(macroscopic_profile(om.grid(), "mode"), pu, om, fam, law, to);
    C[i] = ex.C_hat_sum;
  }
  const double change = std::abs(C[1] / C[0] - 1);
  l.part(change <= 0.2, fmt("C_hat %.4g", C[0]) + fmt(" -> %.4g", C[1]) + fmt(" under n -> 2n, change %.1f%% <= 20%%", 100 * change));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) out_root = argv[1];
  const std::pair<const char*, std::function<void(Line&)>> criteria[] = {
      {"AC1 1D linear harmonic mean", ac1},
      {"AC2 1D nonlinear oracle cross-check", ac2},
      {"AC3 discrete identities", ac3},
      {"AC4 Frechet linearization", ac4},
      {"AC5 exponential localization", [](Line& l) { config_parts(l, "localization_response_d1"); }},
      {"AC6 localization gap rate", [](Line& l) { config_parts(l, "localization_gap_d1"); }},
      {"AC7 RVE fluctuations",
       [](Line& l) {
         config_parts(l, "fluctuation_d1");
         config_parts(l, "fluctuation_d2");
       }},
      {"AC8 systematic vs random", [](Line& l) { config_parts(l, "systematic_d1"); }},
      {"AC9 weight independence", [](Line& l) { config_parts(l, "weights_d1"); }},
      {"AC10 homogenization error rate",
       [](Line& l) {
         config_parts(l, "homogenization_d1");
         config_parts(l, "homogenization_d2");
       }},
      {"AC11 effective-law structure", [](Line& l) { config_parts(l, "structure_d2"); }},
      {"AC12 two-scale residual", ac12},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Line l;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(l);
    } catch (const std::exception& e) {
      l.part(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !l.pass;
    std::printf("%s %s (%.1f s): %s\n", l.pass ? "PASS" : "FAIL", name, secs, l.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures;
}
