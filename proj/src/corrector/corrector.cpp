#include "homolab/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "homolab/field_io.hpp"
#include "homolab/kernels.hpp"
#include "homolab/spectral.hpp"
#include "json.hpp"

namespace homolab {

namespace {

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Field constant_field(const PeriodicGrid& g, Shape shape, std::span<const double> value) {
  Field f(g, std::move(shape));
  for (std::size_t c = 0; c < f.components(); ++c)
    for (double& v : f.component(c)) v = value[c];
  return f;
}

CorrectorSet solve_impl(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi, double T,
                        const SolverOptions& opts, const Field* init) {
  const auto& g = omega.grid();
  CorrectorSet set;
  set.grid = g;
  set.xi.assign(xi.begin(), xi.end());
  set.T = T;
  set.tolerance = opts.tol;
  const double mass = std::isinf(T) ? 0.0 : 1.0 / T;
  DivergenceProblem prob(omega, std::move(fam), mass);
  prob.set_slope(xi);
  set.family = prob.family_ptr();
  set.omega = std::make_shared<const ParameterField>(omega);
  const int m = prob.m();
  set.phi = Field(g, {m});
  const double xn = norm_of(xi);
  if (xn == 0.0) {
    set.stats.method = "trivial";
    set.stats.converged = true;
  } else {
    if (init) set.phi = *init;
    set.stats = solve_monotone(prob, set.phi, xn, opts);
  }
  set.residual_norm = set.stats.residual_norm;
  set.q = prob.flux(set.phi);
  return set;
}

}  // namespace

std::vector<double> CorrectorSet::mean_flux() const {
  std::vector<double> m(q.components());
  for (std::size_t c = 0; c < m.size(); ++c) m[c] = q.mean(c);
  return m;
}

CorrectorSet solve_periodic_corrector(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                      const SolverOptions& opts, const Field* init) {
  return solve_impl(omega, std::move(fam), xi, kInfiniteT, opts, init);
}

CorrectorSet solve_localized_corrector(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                       double T, const SolverOptions& opts, const Field* init) {
  if (!(T > 0.0) || std::isinf(T)) throw std::invalid_argument("localized corrector: T must be positive and finite");
  const double eps = omega.epsilon;
  if (eps > 0.0 && T < 2.0 * eps * eps * (1 - 1e-12))
    throw std::invalid_argument("localized corrector: T < 2 eps^2");
  auto set = solve_impl(omega, std::move(fam), xi, T, opts, init);
  if (omega.grid().length < 8.0 * std::sqrt(T))
    set.warnings.push_back("torus period L < 8 sqrt(T): whole-space emulation may be contaminated by wrap-around");
  return set;
}

void build_flux_corrector(CorrectorSet& set) {
  if (set.q.components() == 0) throw std::invalid_argument("flux corrector: missing flux");
  const auto& g = set.grid;
  const int d = g.dim;
  const int m = static_cast<int>(set.q.components()) / d;
  const std::size_t N = g.sites();
  const double mass = set.mass();
  Field sigma(g, {m, d, d});
  Field qc(g, {m, d});
  std::vector<Field> Cq;  // Cq[j] = C_j q
  for (int j = 0; j < d; ++j) Cq.push_back(apply_centered(set.q, j));
  auto& solver = SpectralSolver::local(g, Boundary::periodic);
  std::vector<double> rhs(N), out(N);
  for (int l = 0; l < m; ++l)
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        const auto a = Cq[j].component(l * d + k), b = Cq[k].component(l * d + j);
        double mean = 0.0;
        for (std::size_t x = 0; x < N; ++x) {
          rhs[x] = a[x] - b[x];
          mean += rhs[x];
        }
        mean /= static_cast<double>(N);
        if (mass == 0.0)  // exact zero mean up to rounding; remove the rounding
          for (double& v : rhs) v -= mean;
        solver.solve(mass, rhs, out);
        auto sjk = sigma.component((l * d + j) * d + k), skj = sigma.component((l * d + k) * d + j);
        for (std::size_t x = 0; x < N; ++x) {
          sjk[x] = out[x];
          skj[x] = -out[x];
        }
      }
  set.sigma = std::move(sigma);
  // divergence identity D-.sigma = q - qbar (periodic case)
  Field centered_q = set.q;
  for (std::size_t c = 0; c < centered_q.components(); ++c) {
    const double mq = set.q.mean(c);
    for (double& v : centered_q.component(c)) v -= mq;
  }
  const Field err = apply_divergence(set.sigma) - centered_q;
  const double qn = centered_q.l2_norm();
  set.sigma_identity_error = qn > 0 ? err.l2_norm() / qn : err.l2_norm();
  const Field dq = apply_gradient(set.q);
  const double h1 = std::sqrt(std::pow(set.q.l2_norm(), 2) + std::pow(dq.l2_norm(), 2));
  set.sigma_identity_constant = h1 > 0 ? err.l2_norm() / (g.spacing * h1) : 0.0;
}

Field build_potential(const Field& phi) {
  const auto& g = phi.grid();
  const int d = g.dim;
  const int m = static_cast<int>(phi.components());
  const std::size_t N = g.sites();
  Field centered = phi;
  for (int l = 0; l < m; ++l) {
    const double mu = phi.mean(l);
    for (double& v : centered.component(l)) v -= mu;
  }
  Field theta(g, {m, d});
  auto& solver = SpectralSolver::local(g, Boundary::periodic);
  std::vector<double> rhs(N);
  for (int i = 0; i < d; ++i) {
    const Field c = apply_centered(centered, i);
    for (int l = 0; l < m; ++l) {
      // (-D-.D+) theta = -C_i (phi - phibar)
      const auto src = c.component(l);
      double mean = 0.0;
      for (std::size_t x = 0; x < N; ++x) {
        rhs[x] = -src[x];
        mean += rhs[x];
      }
      mean /= static_cast<double>(N);
      for (double& v : rhs) v -= mean;
      solver.solve(0.0, rhs, theta.component(l * d + i));
    }
  }
  return theta;
}

double potential_identity_error(const Field& phi, const Field& theta) {
  Field centered = phi;
  for (std::size_t l = 0; l < phi.components(); ++l) {
    const double mu = phi.mean(l);
    for (double& v : centered.component(l)) v -= mu;
  }
  const Field div = apply_divergence(theta);
  return Field(div.grid(), centered.shape(), std::vector<double>(div.values().begin(), div.values().end()))
             .operator-=(centered)
             .l2_norm();
}

LinearizedCorrector solve_linearized_corrector(const CorrectorSet& set, std::span<const double> Xi, bool adjoint,
                                               const SolverOptions& opts) {
  if (!set.omega || !set.family) throw std::invalid_argument("linearized corrector: base set lacks medium/family");
  LinearizedCorrector lin;
  lin.base = &set;
  lin.Xi.assign(Xi.begin(), Xi.end());
  lin.adjoint = adjoint;
  const auto& g = set.grid;
  DivergenceProblem prob(*set.omega, set.family, set.mass());
  prob.set_slope(set.xi);
  const int m = prob.m();
  lin.phi = Field(g, {m});
  if (static_cast<int>(Xi.size()) != prob.family().size()) throw std::invalid_argument("linearized corrector: bad Xi size");
  const double xn = norm_of(Xi);
  if (xn == 0.0) {
    lin.stats.method = "trivial";
    lin.stats.converged = true;
    return lin;
  }
  prob.linearize(set.phi, adjoint);
  // J v = D-.(a Xi)
  const Field aXi = prob.apply_coefficient(constant_field(g, {m, g.dim}, Xi));
  const Field b = apply_divergence(aXi);
  lin.stats = solve_linearized(prob, b, lin.phi, xn, opts);
  return lin;
}

double energy_constant(const CorrectorSet& set) {
  const Field dphi = apply_gradient(set.phi);
  const std::size_t N = set.grid.sites();
  double e = kernels::dot(dphi.values(), dphi.values());
  if (!std::isinf(set.T)) e += kernels::dot(set.phi.values(), set.phi.values()) / set.T;
  const double xn2 = std::pow(norm_of(set.xi), 2);
  return xn2 > 0 ? e / static_cast<double>(N) / xn2 : 0.0;
}

MinimalRadius minimal_radius(const CorrectorSet& set, const MinimalRadiusConfig& cfg, std::size_t x0) {
  if (cfg.K_mass < 1.0) throw std::invalid_argument("minimal radius: K_mass must be >= 1");
  const auto& g = set.grid;
  const double eps = set.omega && set.omega->epsilon > 0 ? set.omega->epsilon : 4.0 * g.spacing;
  if (eps < 4.0 * g.spacing * (1 - 1e-12)) throw std::invalid_argument("minimal radius: epsilon under-resolved");
  double cap = cfg.dyadic_max > 0 ? cfg.dyadic_max : (std::isinf(set.T) ? g.length / 2 : 4.0 * std::sqrt(set.T));
  cap = std::min(cap, g.length / 2);
  const double xn = norm_of(set.xi);
  const auto center = g.position(x0);
  const std::size_t m = set.phi.components();
  MinimalRadius out;
  std::vector<bool> ok;
  for (double R = eps; R <= cap * (1 + 1e-12); R *= 2) {
    const auto ball = lattice_ball(g, center, R);
    std::vector<double> avg(m, 0.0);
    for (auto x : ball)
      for (std::size_t l = 0; l < m; ++l) avg[l] += set.phi(l, x);
    for (double& a : avg) a /= static_cast<double>(ball.size());
    double var = 0.0;
    for (auto x : ball)
      for (std::size_t l = 0; l < m; ++l) var += std::pow(set.phi(l, x) - avg[l], 2);
    var /= static_cast<double>(ball.size());
    const double vr = xn > 0 ? var / (R * R) / (xn * xn) : (var > 0 ? INFINITY : 0.0);
    const double an = norm_of(avg);
    const double mr =
        std::isinf(set.T) ? 0.0 : (xn > 0 ? an / std::sqrt(set.T) / (cfg.K_mass * xn) : (an > 0 ? INFINITY : 0.0));
    out.scanned.push_back(R);
    out.variance_ratio.push_back(vr);
    out.mass_ratio.push_back(mr);
    ok.push_back(vr <= 1.0 && mr <= 1.0);
  }
  if (out.scanned.empty()) {
    out.radius = eps;
    return out;
  }
  int first = static_cast<int>(ok.size());
  for (int i = static_cast<int>(ok.size()) - 1; i >= 0 && ok[i]; --i) first = i;
  if (first == static_cast<int>(ok.size())) {
    out.radius = out.scanned.back();
    out.capped = true;
  } else {
    out.radius = out.scanned[first];
  }
  return out;
}

LocalizationGap localization_gap(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi, double T,
                                 const SolverOptions& opts) {
  const auto a = solve_localized_corrector(omega, fam, xi, T, opts);
  const auto b = solve_localized_corrector(omega, fam, xi, 2 * T, opts);
  LocalizationGap gap;
  gap.T = T;
  const double N = static_cast<double>(omega.grid().sites());
  const Field dphi = b.phi - a.phi;
  const Field dgrad = apply_gradient(dphi);
  gap.gradient_part = kernels::dot(dgrad.values(), dgrad.values()) / N;
  gap.mass_part = kernels::dot(dphi.values(), dphi.values()) / N / T;
  return gap;
}

PerturbationResponse perturbation_response(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                           double T, double radius, double value, const SolverOptions& opts) {
  const auto& g = omega.grid();
  const auto center = torus_center(g);
  ParameterField pert = omega;
  for (auto x : lattice_ball(g, center, radius)) {
    pert.values(0, x) = value;
    for (std::size_t c = 1; c < pert.values.components(); ++c) pert.values(c, x) = 0.0;
  }
  const auto base = solve_localized_corrector(omega, fam, xi, T, opts);
  const auto moved = solve_localized_corrector(pert, fam, xi, T, opts, &base.phi);
  const Field dphi = moved.phi - base.phi;
  const Field dgrad = apply_gradient(dphi);
  const std::size_t N = g.sites();
  const double sT = std::sqrt(T);
  const double width = std::max(g.spacing, sT / 4);
  const double rmax = g.length / 2;
  const int bins = static_cast<int>(rmax / width);
  std::vector<double> sum(bins, 0.0), cnt(bins, 0.0);
  for (std::size_t x = 0; x < N; ++x) {
    // density at the midpoint of the forward differences
    std::array<double, 3> p = g.position(x);
    for (int i = 0; i < g.dim; ++i) p[i] += 0.5 * g.spacing;
    double r2 = 0.0;
    for (int i = 0; i < g.dim; ++i) {
      double dx = std::abs(p[i] - center[i]);
      dx = std::min(dx, g.length - dx);
      r2 += dx * dx;
    }
    const int b = static_cast<int>(std::sqrt(r2) / width);
    if (b >= bins) continue;
    double e = 0.0;
    for (std::size_t c = 0; c < dgrad.components(); ++c) e += dgrad(c, x) * dgrad(c, x);
    for (std::size_t c = 0; c < dphi.components(); ++c) e += dphi(c, x) * dphi(c, x) / T;
    sum[b] += e;
    cnt[b] += 1.0;
  }
  PerturbationResponse resp;
  for (int b = 0; b < bins; ++b)
    if (cnt[b] > 0) {
      resp.radii.push_back((b + 0.5) * width);
      resp.density.push_back(sum[b] / cnt[b]);
    }
  // exponential fit of log density over r in [radius + sqrt T, min(L/2 - sqrt T, 12 sqrt T)]
  const double r_lo = radius + sT, r_hi = std::min(rmax - sT, 12.0 * sT);
  const double floor = resp.density.empty() ? 0.0 : resp.density.front() * 1e-26;
  std::vector<double> X, Y;
  for (std::size_t i = 0; i < resp.radii.size(); ++i)
    if (resp.radii[i] >= r_lo && resp.radii[i] <= r_hi && resp.density[i] > floor) {
      X.push_back(resp.radii[i] / sT);
      Y.push_back(std::log(resp.density[i]));
    }
  resp.fit_points = static_cast<int>(X.size());
  if (X.size() >= 3) {
    const double n = static_cast<double>(X.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      mx += X[i];
      my += Y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      sxx += (X[i] - mx) * (X[i] - mx);
      sxy += (X[i] - mx) * (Y[i] - my);
      syy += (Y[i] - my) * (Y[i] - my);
    }
    const double slope = sxy / sxx;
    resp.gamma_hat = -slope / 2.0;
    resp.r_squared = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  }
  if (!resp.density.empty()) {
    const double target = 10.0 * sT;
    std::size_t best = 0;
    for (std::size_t i = 0; i < resp.radii.size(); ++i)
      if (std::abs(resp.radii[i] - target) < std::abs(resp.radii[best] - target)) best = i;
    resp.ratio_at_10 = resp.density[best] / resp.density.front();
  }
  return resp;
}

std::vector<std::filesystem::path> write_corrector_snapshot(const CorrectorSet& set,
                                                            const std::filesystem::path& stem) {
  std::vector<std::filesystem::path> out;
  auto path = [&](const std::string& suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  write_snapshot(path(".phi.hlf"), set.phi);
  out.push_back(path(".phi.hlf"));
  write_snapshot(path(".q.hlf"), set.q);
  out.push_back(path(".q.hlf"));
  if (set.has_sigma()) {
    write_snapshot(path(".sigma.hlf"), set.sigma);
    out.push_back(path(".sigma.hlf"));
  }
  if (set.theta) {
    write_snapshot(path(".theta.hlf"), *set.theta);
    out.push_back(path(".theta.hlf"));
  }
  nlohmann::json j;
  j["xi"] = set.xi;
  j["T"] = std::isinf(set.T) ? nlohmann::json("inf") : nlohmann::json(set.T);
  j["tolerance"] = set.tolerance;
  j["residual_norm"] = set.residual_norm;
  j["threshold"] = set.stats.threshold;
  j["method"] = set.stats.method;
  j["newton_iterations"] = set.stats.newton_iterations;
  j["linear_iterations"] = set.stats.linear_iterations;
  j["relaxation_steps"] = set.stats.relaxation_steps;
  j["residual_history"] = set.stats.history;
  j["grid"] = {{"d", set.grid.dim}, {"n", set.grid.n}, {"L", set.grid.length}};
  if (set.family) j["family"] = set.family->name();
  if (set.omega) j["medium"] = nlohmann::json::parse(set.omega->lineage_json());
  if (set.has_sigma()) j["sigma_identity_error"] = set.sigma_identity_error;
  j["warnings"] = set.warnings;
  std::ofstream os(path(".json"));
  os << j.dump(2) << "\n";
  out.push_back(path(".json"));
  return out;
}

}  // namespace homolab
