#include "homolab/homog.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "homolab/rng.hpp"

namespace homolab {

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Safeguarded Newton on an increasing scalar function with a bracket [lo, hi].
template <class F>
double monotone_root(F&& f, double lo, double hi, double tol) {
  double flo = f(lo).first, fhi = f(hi).first;
  if (flo > 0 || fhi < 0) throw std::runtime_error("root: bracketing failed (non-monotone law?)");
  if (flo == 0) return lo;
  if (fhi == 0) return hi;
  double x = 0.5 * (lo + hi);
  const double scale = std::max({std::abs(lo), std::abs(hi), 1e-300});
  for (int it = 0; it < 200; ++it) {
    const auto [fx, dfx] = f(x);
    if (fx == 0) return x;
    (fx < 0 ? lo : hi) = x;
    double nx = dfx > 0 ? x - fx / dfx : 0.5 * (lo + hi);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::abs(nx - x) <= tol * scale || hi - lo <= tol * scale) return nx;
    x = nx;
  }
  return x;
}

}  // namespace

RveEstimate rve_periodic(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                         const SolverOptions& opts) {
  const auto set = solve_periodic_corrector(omega, std::move(fam), xi, opts);
  RveEstimate e;
  e.xi.assign(xi.begin(), xi.end());
  e.value = set.mean_flux();
  e.L = omega.grid().length;
  e.n = omega.grid().n;
  e.d = omega.grid().dim;
  e.seed = omega.seed;
  e.residual = set.residual_norm;
  e.iterations = set.stats.newton_iterations + set.stats.linear_iterations;
  e.method = set.stats.method;
  return e;
}

Field make_weight(const PeriodicGrid& g, const WeightSpec& w) {
  const double R = w.radius > 0 ? w.radius : g.length / 8;
  if (R > g.length / 8 * (1 + 1e-12)) throw std::invalid_argument("weight: support radius exceeds L/8");
  if (R < 2 * g.spacing) throw std::invalid_argument("weight: support radius below 2h");
  if (w.profile != "bump" && w.profile != "cosine") throw std::invalid_argument("weight: unknown profile " + w.profile);
  auto c = torus_center(g);
  for (int i = 0; i < 3; ++i) c[i] += w.offset[i];
  Field eta(g, {1});
  double total = 0.0;
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const double t = wrap_distance(g, x, c) / R;
    double v = 0.0;
    if (t < 1) v = w.profile == "bump" ? std::exp(-1.0 / (1.0 - t * t)) : std::pow(std::cos(M_PI * t / 2), 2);
    eta(0, x) = v;
    total += v;
  }
  eta *= 1.0 / (total * g.cell_volume());
  return eta;
}

RveEstimate rve_localized(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi, double T,
                          const WeightSpec& weight, const SolverOptions& opts) {
  const auto& g = omega.grid();
  const double eps = omega.epsilon;
  if (T > std::pow(g.length / 8, 2) * (1 + 1e-12)) throw std::invalid_argument("localized RVE: T > (L/8)^2");
  if (eps > 0 && T < 2 * eps * eps * (1 - 1e-12)) throw std::invalid_argument("localized RVE: T < 2 eps^2");
  const Field eta = make_weight(g, weight);
  const auto set = solve_localized_corrector(omega, std::move(fam), xi, T, opts);
  const int nd = set.family->size();
  const std::size_t N = g.sites();
  const std::size_t m = set.phi.components();
  RveEstimate e;
  e.kind = "localized";
  e.xi.assign(xi.begin(), xi.end());
  e.T = T;
  e.L = g.length;
  e.n = g.n;
  e.d = g.dim;
  e.seed = omega.seed;
  e.residual = set.residual_norm;
  e.iterations = set.stats.newton_iterations + set.stats.linear_iterations;
  e.method = set.stats.method;
  e.value.assign(nd, 0.0);
  const double hd = g.cell_volume();
  const bool trivial = set.phi.max_abs() == 0.0;
  std::vector<double> Xi(nd, 0.0);
  for (int a = 0; a < nd; ++a) {
    double s = 0.0;
    for (std::size_t x = 0; x < N; ++x) s += eta(0, x) * set.q(a, x);
    if (!trivial) {
      std::fill(Xi.begin(), Xi.end(), 0.0);
      Xi[a] = 1.0;
      const auto adj = solve_linearized_corrector(set, Xi, true, opts);
      e.iterations += adj.stats.linear_iterations;
      for (std::size_t x = 0; x < N; ++x) {
        double pp = 0.0;
        for (std::size_t l = 0; l < m; ++l) pp += set.phi(l, x) * adj.phi(l, x);
        s -= eta(0, x) * pp / T;
      }
    }
    e.value[a] = s * hd;
  }
  return e;
}

double invert_scalar_law(const OperatorFamily& fam, const double* omega, double q, double root_tol) {
  if (fam.size() != 1) throw std::invalid_argument("scalar inversion needs m = d = 1");
  if (q == 0.0) return 0.0;
  // lambda |z| <= |A(z)| <= Lambda |z| brackets the root
  double lo = q / fam.Lambda(), hi = q / fam.lambda();
  if (lo > hi) std::swap(lo, hi);
  const double pad = 1e-12 * std::abs(hi - lo);
  return monotone_root(
      [&](double z) {
        double a, da;
        fam.eval(omega, &z, &a);
        fam.d_xi(omega, &z, &da);
        return std::pair{a - q, da};
      },
      lo - pad, hi + pad, root_tol);
}

namespace {

/// q with sum_i w_i A(omega_i, .)^{-1}(q) = xi.
double flux_from_average(const OperatorFamily& fam, const std::vector<std::vector<double>>& omegas,
                         const std::vector<double>& weights, double xi, double root_tol) {
  if (fam.size() != 1) throw std::invalid_argument("1D oracle needs m = d = 1");
  if (xi == 0.0) return 0.0;
  double lo = fam.lambda() * xi, hi = fam.Lambda() * xi;
  if (lo > hi) std::swap(lo, hi);
  const double pad = 1e-12 * std::abs(hi - lo) + 1e-300;
  return monotone_root(
      [&](double q) {
        double mean = 0.0, dmean = 0.0;
        for (std::size_t i = 0; i < omegas.size(); ++i) {
          const double z = invert_scalar_law(fam, omegas[i].data(), q, root_tol * 1e-2);
          double da;
          fam.d_xi(omegas[i].data(), &z, &da);
          mean += weights[i] * z;
          dmean += weights[i] / da;
        }
        return std::pair{mean - xi, dmean};
      },
      lo - pad, hi + pad, root_tol);
}

}  // namespace

double oracle_1d(const ParameterField& omega, const OperatorFamily& fam, double xi, double root_tol) {
  const auto& g = omega.grid();
  if (g.dim != 1) throw std::invalid_argument("oracle_1d: grid must be one-dimensional");
  const int k = omega.channels();
  const std::size_t N = g.sites();
  std::vector<std::vector<double>> om(N, std::vector<double>(k));
  for (std::size_t x = 0; x < N; ++x)
    for (int c = 0; c < k; ++c) om[x][c] = omega.values(c, x);
  auto f1 = fam.d() == 1 ? nullptr : fam.with_dim(1);
  return flux_from_average(f1 ? *f1 : fam, om, std::vector<double>(N, 1.0 / N), xi, root_tol);
}

double oracle_1d_law(const OperatorFamily& fam, const ClampSpec& clamp, double xi, int nodes, double root_tol) {
  if (fam.k() != 1) throw std::invalid_argument("oracle_1d_law: one parameter channel only");
  const auto rule = gauss_hermite_normal(nodes);
  std::vector<std::vector<double>> om;
  std::vector<double> w;
  for (int i = 0; i < nodes; ++i) {
    if (rule.weights[i] < 1e-300) continue;
    double y = rule.nodes[i];
    clamp.apply(&y, 1);
    om.push_back({y});
    w.push_back(rule.weights[i]);
  }
  auto f1 = fam.d() == 1 ? nullptr : fam.with_dim(1);
  return flux_from_average(f1 ? *f1 : fam, om, w, xi, root_tol);
}

PeriodicGrid MediumSpec::grid(int d, double L, double epsilon) const {
  if (!(epsilon > 0)) throw std::invalid_argument("medium: epsilon must be positive");
  const double nd = resolution * L / epsilon;
  const long long n = std::llround(nd);
  if (std::abs(nd - static_cast<double>(n)) > 1e-9 * nd || !is_power_of_two(n) || n < 4)
    throw std::invalid_argument("medium: resolution * L / eps must be a power of two >= 4");
  return build_grid(d, static_cast<int>(n), L);
}

ParameterField MediumSpec::sample(int d, double L, double epsilon, std::uint64_t seed) const {
  return sample_parameter_field(grid(d, L, epsilon), KernelSpec{shape, epsilon, k}, clamp, seed);
}

namespace {

std::vector<double> matvec_left(const std::vector<double>& O, const std::vector<double>& X, int m, int d) {
  std::vector<double> out(m * d, 0.0);  // O X, O m x m
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < m; ++l) out[i * d + j] += O[i * m + l] * X[l * d + j];
  return out;
}

std::vector<double> matvec_right(const std::vector<double>& X, const std::vector<double>& O, int m, int d) {
  std::vector<double> out(m * d, 0.0);  // X O, O d x d
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < d; ++l) out[i * d + j] += X[i * d + l] * O[l * d + j];
  return out;
}

struct PairedStat {
  std::vector<std::vector<double>> diffs;  // per sample, m*d
  void check(double floor, double& max_dev, double& max_z, bool& pass) const {
    if (diffs.empty()) return;
    const std::size_t nd = diffs[0].size();
    for (std::size_t c = 0; c < nd; ++c) {
      std::vector<double> v;
      for (auto& d : diffs) v.push_back(d[c]);
      const auto s = summarize(v);
      const double dev = std::abs(s.mean);
      const double se = std::max(s.se, floor);
      max_dev = std::max(max_dev, dev);
      max_z = std::max(max_z, dev / se);
      if (dev > 3 * se) pass = false;
    }
  }
};

}  // namespace

StructureReport structure_checks(FamilyPtr fam, const FieldSampler& sampler, const StructureConfig& cfg) {
  if (cfg.n_samples < 1) throw std::invalid_argument("structure: n_samples must be >= 1");
  StructureReport rep;
  rep.lambda = fam->lambda();
  rep.Lambda = fam->Lambda();
  rep.lipschitz_bound = 4.0 * rep.Lambda * rep.Lambda / rep.lambda;
  rep.samples = cfg.n_samples;
  const int m = fam->m();
  std::vector<std::vector<double>> pair_means(cfg.xi_pairs.size() * 2);
  PairedStat frame, iso;
  std::vector<PairedStat> frame_by(cfg.frame_rotations.size()), iso_by(cfg.isotropy_rotations.size());
  const double floor = 100.0 * cfg.opts.tol * std::max(1.0, norm_of(cfg.xi));
  for (int s = 0; s < cfg.n_samples; ++s) {
    const auto omega = sampler(seed_stream(cfg.base_seed, static_cast<std::uint64_t>(s)));
    const int d = omega.grid().dim;
    auto rve = [&](const std::vector<double>& xi) { return rve_periodic(omega, fam, xi, cfg.opts).value; };
    for (std::size_t p = 0; p < cfg.xi_pairs.size(); ++p) {
      const auto& [x1, x2] = cfg.xi_pairs[p];
      const auto a1 = rve(x1), a2 = rve(x2);
      double num = 0, den = 0, dA = 0;
      for (std::size_t c = 0; c < x1.size(); ++c) {
        num += (a2[c] - a1[c]) * (x2[c] - x1[c]);
        den += (x2[c] - x1[c]) * (x2[c] - x1[c]);
        dA += (a2[c] - a1[c]) * (a2[c] - a1[c]);
      }
      rep.monotone_min = std::min(rep.monotone_min, num / den);
      rep.lipschitz_max = std::max(rep.lipschitz_max, std::sqrt(dA / den));
      for (int w = 0; w < 2; ++w) {
        auto& acc = pair_means[2 * p + w];
        const auto& a = w == 0 ? a1 : a2;
        if (acc.empty()) acc.assign(a.size(), 0.0);
        for (std::size_t c = 0; c < a.size(); ++c) acc[c] += a[c] / cfg.n_samples;
      }
    }
    if (!cfg.xi.empty() && (!cfg.frame_rotations.empty() || !cfg.isotropy_rotations.empty())) {
      const auto base = rve(cfg.xi);
      for (std::size_t r = 0; r < cfg.frame_rotations.size(); ++r) {
        const auto& O = cfg.frame_rotations[r];
        const auto lhs = rve(matvec_left(O, cfg.xi, m, d));
        const auto rhs = matvec_left(O, base, m, d);
        std::vector<double> diff(lhs.size());
        for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = lhs[c] - rhs[c];
        frame_by[r].diffs.push_back(diff);
      }
      for (std::size_t r = 0; r < cfg.isotropy_rotations.size(); ++r) {
        const auto& O = cfg.isotropy_rotations[r];
        const auto lhs = rve(matvec_right(cfg.xi, O, m, d));
        const auto rhs = matvec_right(base, O, m, d);
        std::vector<double> diff(lhs.size());
        for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = lhs[c] - rhs[c];
        iso_by[r].diffs.push_back(diff);
      }
    }
  }
  for (std::size_t p = 0; p < cfg.xi_pairs.size(); ++p) {
    const auto& [x1, x2] = cfg.xi_pairs[p];
    const auto &a1 = pair_means[2 * p], &a2 = pair_means[2 * p + 1];
    double num = 0, den = 0;
    for (std::size_t c = 0; c < x1.size(); ++c) {
      num += (a2[c] - a1[c]) * (x2[c] - x1[c]);
      den += (x2[c] - x1[c]) * (x2[c] - x1[c]);
    }
    rep.mean_monotone_min = std::min(rep.mean_monotone_min, num / den);
  }
  rep.monotone_pass = cfg.xi_pairs.empty() || rep.monotone_min >= rep.lambda * (1 - 1e-6);
  rep.lipschitz_pass = cfg.xi_pairs.empty() || rep.lipschitz_max <= rep.lipschitz_bound * 1.05;
  for (auto& f : frame_by) f.check(floor, rep.frame_max_dev, rep.frame_max_z, rep.frame_pass);
  for (auto& f : iso_by) f.check(floor, rep.iso_max_dev, rep.iso_max_z, rep.iso_pass);
  return rep;
}

std::vector<McRow> rve_sweep(const SweepConfig& cfg) {
  if (!cfg.family) throw std::invalid_argument("sweep: missing family");
  if (cfg.L_over_eps.empty()) throw std::invalid_argument("sweep: empty L list");
  if (cfg.n_samples < 1) throw std::invalid_argument("sweep: n_samples must be >= 1");
  const int S = cfg.n_samples;
  const int tasks = static_cast<int>(cfg.L_over_eps.size()) * S;
  std::vector<McRow> rows(tasks);
  // validate grids up front so configuration errors are not swallowed per task
  for (double r : cfg.L_over_eps) cfg.medium.grid(cfg.d, r * cfg.epsilon, cfg.epsilon);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < tasks; ++t) {
    McRow& row = rows[t];
    row.L = cfg.L_over_eps[t / S] * cfg.epsilon;
    row.sample = t % S;
    row.seed = seed_stream(cfg.base_seed, static_cast<std::uint64_t>(t));
    try {
      const auto omega = cfg.medium.sample(cfg.d, row.L, cfg.epsilon, row.seed);
      row.n = omega.grid().n;
      const auto e = rve_periodic(omega, cfg.family, cfg.xi, cfg.opts);
      row.value = e.value;
      row.residual = e.residual;
      if (cfg.control_flux) {
        if (cfg.d != 1 || cfg.family->size() != 1 || omega.channels() != 1)
          throw std::invalid_argument("control variate needs d = m = k = 1");
        double z = 0.0;
        const auto w = omega.values.component(0);
        for (double wx : w) z += invert_scalar_law(*cfg.family, &wx, *cfg.control_flux);
        row.control = z / static_cast<double>(w.size());
      }
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  }
  return rows;
}

namespace {

std::vector<SweepLevel> summarize_levels(const SweepConfig& cfg, const std::vector<McRow>& rows) {
  std::vector<SweepLevel> levels;
  const int S = cfg.n_samples;
  for (std::size_t i = 0; i < cfg.L_over_eps.size(); ++i) {
    SweepLevel lv;
    lv.L = cfg.L_over_eps[i] * cfg.epsilon;
    std::vector<double> v;
    for (int s = 0; s < S; ++s) {
      const auto& r = rows[i * S + s];
      if (r.error.empty())
        v.push_back(r.value.at(cfg.component));
      else
        ++lv.failures;
    }
    lv.stats = summarize(v);
    levels.push_back(lv);
  }
  return levels;
}

}  // namespace

FluctuationResult fluctuation_experiment(const SweepConfig& cfg) {
  if (cfg.n_samples < 1) throw std::invalid_argument("fluctuation: need at least 1 sample per L");
  FluctuationResult res;  // one sample per L: rows only, no sd and no fit
  res.rows = rve_sweep(cfg);
  res.levels = summarize_levels(cfg, res.rows);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < res.levels.size(); ++i)
    if (res.levels[i].stats.sd > 0) {
      x.push_back(cfg.L_over_eps[i]);
      y.push_back(res.levels[i].stats.sd);
    }
  if (x.size() >= 3) res.fit = fit_rate(x, y);
  return res;
}

double law_inverse_slope(const OperatorFamily& fam, const ClampSpec& clamp, double q, int nodes) {
  if (fam.size() != 1 || fam.k() != 1) throw std::invalid_argument("law_inverse_slope: m = d = k = 1 only");
  const auto rule = gauss_hermite_normal(nodes);
  double s = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double y = rule.nodes[i];
    clamp.apply(&y, 1);
    const double z = invert_scalar_law(fam, &y, q);
    double da;
    fam.d_xi(&y, &z, &da);
    s += rule.weights[i] / da;
  }
  return s;
}

SystematicResult systematic_experiment(const SweepConfig& cfg, double reference, double reference_se) {
  if (cfg.n_samples < 2) throw std::invalid_argument("systematic: need at least 2 samples per L");
  SystematicResult res;
  res.reference = reference;
  res.reference_se = reference_se;
  res.rows = rve_sweep(cfg);
  res.levels = summarize_levels(cfg, res.rows);
  const double slope = cfg.control_flux ? law_inverse_slope(*cfg.family, cfg.medium.clamp, *cfg.control_flux) : 0.0;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < res.levels.size(); ++i) {
    auto& lv = res.levels[i];
    SampleSummary est = lv.stats;
    if (cfg.control_flux) {
      std::vector<double> v;
      for (int s = 0; s < cfg.n_samples; ++s) {
        const auto& r = res.rows[i * cfg.n_samples + s];
        if (r.error.empty()) v.push_back(r.value.at(cfg.component) + (r.control - cfg.xi.at(0)) / slope);
      }
      est = summarize(v);
    }
    lv.bias = est.mean - reference;
    lv.bias_se = std::hypot(est.se, reference_se);
    if (std::abs(lv.bias) <= 2 * lv.bias_se) res.inconclusive = true;
    if (std::abs(lv.bias) > 0) {
      x.push_back(cfg.L_over_eps[i]);
      y.push_back(std::abs(lv.bias));
    }
  }
  if (x.size() >= 3) res.fit = fit_rate(x, y);
  if (!res.levels.empty()) res.bias_below_sd = std::abs(res.levels.back().bias) < res.levels.back().stats.sd;
  return res;
}

WeightComparison weight_independence(const SweepConfig& cfg, double L_over_eps, double T, const WeightSpec& w1,
                                     const WeightSpec& w2) {
  if (!cfg.family) throw std::invalid_argument("weights: missing family");
  const int S = cfg.n_samples;
  const double L = L_over_eps * cfg.epsilon;
  std::vector<double> a(S, NAN), b(S, NAN);
  std::vector<std::string> err(S);
  cfg.medium.grid(cfg.d, L, cfg.epsilon);
  make_weight(cfg.medium.grid(cfg.d, L, cfg.epsilon), w1);
  make_weight(cfg.medium.grid(cfg.d, L, cfg.epsilon), w2);
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < S; ++s) {
    try {
      const auto omega = cfg.medium.sample(cfg.d, L, cfg.epsilon, seed_stream(cfg.base_seed, s));
      a[s] = rve_localized(omega, cfg.family, cfg.xi, T, w1, cfg.opts).value.at(cfg.component);
      b[s] = rve_localized(omega, cfg.family, cfg.xi, T, w2, cfg.opts).value.at(cfg.component);
    } catch (const std::exception& ex) {
      err[s] = ex.what();
    }
  }
  std::vector<double> va, vb, vd;
  for (int s = 0; s < S; ++s)
    if (err[s].empty()) {
      va.push_back(a[s]);
      vb.push_back(b[s]);
      vd.push_back(a[s] - b[s]);
    }
  WeightComparison c;
  c.first = summarize(va);
  c.second = summarize(vb);
  c.difference = summarize(vd);
  c.samples = static_cast<int>(va.size());
  c.combined_se = std::hypot(c.first.se, c.second.se);
  c.z = c.combined_se > 0 ? std::abs(c.first.mean - c.second.mean) / c.combined_se : 0.0;
  return c;
}

}  // namespace homolab
