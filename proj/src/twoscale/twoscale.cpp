#include "homolab/twoscale.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "homolab/kernels.hpp"
#include "homolab/rng.hpp"

namespace homolab {

namespace {

double psi(double t) {
  if (std::abs(t) >= 1.0) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * t);
  return c * c;
}

double axis_offset(const PeriodicGrid& g, bool periodic, double p, double c) {
  double r = p - c;
  if (periodic) r -= g.length * std::round(r / g.length);
  return r;
}

double eta_at(const PartitionOfUnity& pu, const PartitionOfUnity::Node& node, const std::array<double, 3>& pos) {
  double v = 1.0;
  for (int i = 0; i < pu.grid.dim && v != 0.0; ++i)
    v *= psi(axis_offset(pu.grid, pu.periodic, pos[i], node.center[i]) / pu.delta);
  return v;
}

/// D+_i eta_k at a site, evaluated from the profile.
std::array<double, 3> eta_gradient(const PartitionOfUnity& pu, const PartitionOfUnity::Node& node, std::size_t x,
                                   double eta_x) {
  std::array<double, 3> grad{};
  const auto& g = pu.grid;
  const auto p = g.position(x);
  for (int i = 0; i < g.dim; ++i) {
    auto q = p;
    q[i] += g.spacing;
    grad[i] = (eta_at(pu, node, q) - eta_x) / g.spacing;
  }
  return grad;
}

double center_distance(const PartitionOfUnity& pu, const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0.0;
  for (int i = 0; i < pu.grid.dim; ++i) {
    const double r = axis_offset(pu.grid, pu.periodic, a[i], b[i]);
    s += r * r;
  }
  return std::sqrt(s);
}

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Field PartitionOfUnity::dense(std::size_t k) const {
  Field f(grid, {1});
  const auto& nd = nodes.at(k);
  for (std::size_t i = 0; i < nd.sites.size(); ++i) f(0, nd.sites[i]) = nd.weight[i];
  return f;
}

double PartitionOfUnity::sum_defect() const {
  std::vector<double> s(grid.sites(), 0.0);
  for (const auto& nd : nodes)
    for (std::size_t i = 0; i < nd.sites.size(); ++i) s[nd.sites[i]] += nd.weight[i];
  double worst = 0.0;
  for (double v : s) worst = std::max(worst, std::abs(v - 1.0));
  return worst;
}

std::vector<std::size_t> PartitionOfUnity::neighbors(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < nodes.size(); ++j)
    if (center_distance(*this, nodes[k].center, nodes[j].center) <= 4 * delta * (1 + 1e-12)) out.push_back(j);
  return out;
}

PartitionOfUnity build_partition(const PeriodicGrid& g, double delta, bool periodic) {
  if (!(delta >= 4 * g.spacing * (1 - 1e-12))) throw std::invalid_argument("partition: delta < 4h");
  const double per = g.length / delta;
  const long long count = std::llround(per);
  if (periodic && std::abs(per - static_cast<double>(count)) > 1e-9 * per)
    throw std::invalid_argument("partition: delta must divide L on the torus");
  if (!periodic && 2 * delta > g.length) throw std::invalid_argument("partition: delta > L/2 on the box");
  PartitionOfUnity pu;
  pu.grid = g;
  pu.delta = delta;
  pu.periodic = periodic;
  const int d = g.dim;
  const int per_axis = periodic ? static_cast<int>(count) : static_cast<int>(std::ceil(per - 1e-9)) + 1;
  const int reach = static_cast<int>(std::ceil(delta / g.spacing));
  long long total = 1;
  for (int i = 0; i < d; ++i) total *= per_axis;
  for (long long id = 0; id < total; ++id) {
    PartitionOfUnity::Node node;
    long long r = id;
    std::array<int, 3> kc{};
    for (int i = d - 1; i >= 0; --i) {
      kc[i] = static_cast<int>(r % per_axis);
      r /= per_axis;
      node.center[i] = kc[i] * delta;
    }
    // support: lattice cube around the center, one extra layer below for D+
    std::array<int, 3> base{}, span{1, 1, 1};
    for (int i = 0; i < d; ++i) {
      base[i] = static_cast<int>(std::floor(node.center[i] / g.spacing + 0.5)) - reach - 1;
      span[i] = 2 * reach + 3;
    }
    for (int a = 0; a < span[0]; ++a)
      for (int b = 0; b < span[1]; ++b)
        for (int c = 0; c < span[2]; ++c) {
          std::array<int, 3> ix{base[0] + a, base[1] + b, base[2] + c};
          bool inside = true;
          for (int i = 0; i < d; ++i) {
            if (periodic)
              ix[i] = ((ix[i] % g.n) + g.n) % g.n;
            else if (ix[i] < 0 || ix[i] >= g.n)
              inside = false;
          }
          for (int i = d; i < 3; ++i) ix[i] = 0;
          if (!inside) continue;
          const std::size_t x = g.index(ix);
          if (std::find(node.sites.begin(), node.sites.end(), x) != node.sites.end()) continue;
          node.sites.push_back(x);
          node.weight.push_back(0.0);
        }
    for (std::size_t i = 0; i < node.sites.size(); ++i) node.weight[i] = eta_at(pu, node, g.position(node.sites[i]));
    pu.nodes.push_back(std::move(node));
  }
  std::vector<int> cover(g.sites(), 0);
  for (const auto& nd : pu.nodes)
    for (std::size_t i = 0; i < nd.sites.size(); ++i) {
      if (nd.weight[i] > 0) ++cover[nd.sites[i]];
      const auto gr = eta_gradient(pu, nd, nd.sites[i], nd.weight[i]);
      double gn = 0;
      for (int a = 0; a < d; ++a) gn += gr[a] * gr[a];
      pu.gradient_constant = std::max(pu.gradient_constant, delta * std::sqrt(gn));
    }
  pu.max_overlap = *std::max_element(cover.begin(), cover.end());
  for (std::size_t k = 0; k < pu.nodes.size() && k < 64; ++k)  // translation invariant on the torus
    pu.max_neighbors = std::max(pu.max_neighbors, static_cast<int>(pu.neighbors(k).size()));
  return pu;
}

std::vector<std::vector<double>> local_slopes(const Field& g, const PartitionOfUnity& pu) {
  if (!(g.grid() == pu.grid)) throw std::invalid_argument("local_slopes: grid mismatch");
  std::vector<std::vector<double>> xi;
  const std::size_t nc = g.components();
  for (const auto& nd : pu.nodes) {
    std::vector<double> v(nc, 0.0);
    double w = 0.0;
    for (std::size_t i = 0; i < nd.sites.size(); ++i) {
      w += nd.weight[i];
      for (std::size_t c = 0; c < nc; ++c) v[c] += nd.weight[i] * g(c, nd.sites[i]);
    }
    for (double& x : v) x /= w;
    xi.push_back(std::move(v));
  }
  return xi;
}

EffectiveLaw linear_effective_law(int m, int d, std::vector<double> M, std::string source) {
  const int n = m * d;
  if (static_cast<int>(M.size()) != n * n) throw std::invalid_argument("linear law: matrix must be (md) x (md)");
  EffectiveLaw law;
  law.m = m;
  law.d = d;
  law.source = std::move(source);
  law.eval = [M = std::move(M), n](const double* xi, double* out) {
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) s += M[a * n + b] * xi[b];
      out[a] = s;
    }
  };
  return law;
}

EffectiveLaw tabulated_effective_law_1d(const OperatorFamily& fam, const ClampSpec& clamp, double xi_max, int points) {
  if (points < 3 || !(xi_max > 0)) throw std::invalid_argument("tabulated law: need points >= 3 and xi_max > 0");
  auto f1 = fam.d() == 1 ? nullptr : fam.with_dim(1);
  const OperatorFamily& F = f1 ? *f1 : fam;
  std::vector<double> xs(points), qs(points), dq(points);
  for (int i = 0; i < points; ++i) {
    xs[i] = -xi_max + 2 * xi_max * i / (points - 1);
    qs[i] = oracle_1d_law(F, clamp, xs[i]);
    dq[i] = 1.0 / law_inverse_slope(F, clamp, qs[i]);
  }
  EffectiveLaw law;
  law.source = "gauss-hermite one-point law, " + std::to_string(points) + "-point Hermite table";
  const double hstep = xs[1] - xs[0];
  law.eval = [xs, qs, dq, hstep, xi_max](const double* xi, double* out) {
    const double x = xi[0];
    if (x <= -xi_max) {
      out[0] = qs.front() + dq.front() * (x - xs.front());
      return;
    }
    if (x >= xi_max) {
      out[0] = qs.back() + dq.back() * (x - xs.back());
      return;
    }
    const auto i = std::min<std::size_t>(xs.size() - 2, static_cast<std::size_t>((x - xs[0]) / hstep));
    const double t = (x - xs[i]) / hstep;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
    out[0] = h00 * qs[i] + h10 * hstep * dq[i] + h01 * qs[i + 1] + h11 * hstep * dq[i + 1];
  };
  return law;
}

EffectiveLaw rve_effective_law(FamilyPtr fam, const FieldSampler& sampler, int samples, std::uint64_t base_seed,
                               const SolverOptions& opts, double* standard_error) {
  if (samples < 1) throw std::invalid_argument("rve law: samples >= 1");
  const int n = fam->size();
  std::vector<std::vector<double>> per(samples, std::vector<double>(n * n, 0.0));
  int d = fam->d();
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < samples; ++s) {
    const auto omega = sampler(seed_stream(base_seed, static_cast<std::uint64_t>(s)));
    for (int b = 0; b < n; ++b) {
      std::vector<double> e(n, 0.0);
      e[b] = 1.0;
      const auto r = rve_periodic(omega, fam, e, opts);
      for (int a = 0; a < n; ++a) per[s][a * n + b] = r.value[a];
    }
  }
  std::vector<double> M(n * n, 0.0);
  double worst_se = 0.0;
  for (int c = 0; c < n * n; ++c) {
    std::vector<double> v;
    for (int s = 0; s < samples; ++s) v.push_back(per[s][c]);
    const auto st = summarize(v);
    M[c] = st.mean;
    worst_se = std::max(worst_se, st.se);
  }
  if (standard_error) *standard_error = worst_se;
  return linear_effective_law(fam->m(), d, std::move(M),
                              "periodic RVE mean over " + std::to_string(samples) + " samples");
}

Field macroscopic_profile(const PeriodicGrid& g, const std::string& name, int m, double amplitude) {
  Field u(g, {m});
  const double L = g.length;
  const auto c = torus_center(g);
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const auto p = g.position(x);
    double v = 1.0;
    if (name == "mode") {
      for (int i = 0; i < g.dim; ++i) v *= std::sin(2 * std::numbers::pi * p[i] / L);
    } else if (name == "gaussian") {
      double r2 = 0;
      for (int i = 0; i < g.dim; ++i) r2 += (p[i] - c[i]) * (p[i] - c[i]);
      v = std::exp(-r2 / (2 * std::pow(L / 8, 2)));
    } else if (name == "box_mode") {
      for (int i = 0; i < g.dim; ++i) v *= std::sin(std::numbers::pi * p[i] / L);
    } else if (name == "poly_cutoff") {
      for (int i = 0; i < g.dim; ++i) v *= 16 * std::pow(p[i] * (L - p[i]) / (L * L), 2);
    } else {
      throw std::invalid_argument("profile: unknown name " + name);
    }
    for (int l = 0; l < m; ++l) u(l, x) = amplitude * v * (l == 0 ? 1.0 : 1.0 / (l + 1));
  }
  if (name == "gaussian")
    for (int l = 0; l < m; ++l) {
      const double mu = u.mean(l);
      for (double& v : u.component(l)) v -= mu;
    }
  return u;
}

namespace {

Field law_flux(const Field& G, const EffectiveLaw& law) {
  const std::size_t N = G.sites();
  const int n = law.m * law.d;
  if (static_cast<int>(G.components()) != n) throw std::invalid_argument("effective law: slope shape mismatch");
  Field q(G.grid(), G.shape());
  std::vector<double> xi(n), out(n);
  for (std::size_t x = 0; x < N; ++x) {
    for (int a = 0; a < n; ++a) xi[a] = G(a, x);
    law.eval(xi.data(), out.data());
    for (int a = 0; a < n; ++a) q(a, x) = out[a];
  }
  return q;
}

}  // namespace

Field homogenized_rhs(const Field& u_hom, const EffectiveLaw& law, double mass) {
  Field f = apply_divergence(law_flux(apply_gradient(u_hom), law));
  f *= -1.0;
  if (mass > 0) kernels::axpy(mass, u_hom.values(), f.values());
  return f;
}

TwoScaleExpansion two_scale_expand(const Field& u_hom, const PartitionOfUnity& pu, const ParameterField& omega,
                                   FamilyPtr fam, const EffectiveLaw& law, const TwoScaleOptions& opts) {
  const auto& g = pu.grid;
  if (!(u_hom.grid() == g) || !(omega.grid() == g)) throw std::invalid_argument("two-scale: grid mismatch");
  if (fam->d() != g.dim) fam = fam->with_dim(g.dim);
  const int m = fam->m(), d = g.dim, nd = m * d;
  if (law.m != m || law.d != d) throw std::invalid_argument("two-scale: effective law has the wrong shape");
  if (opts.recenter != "class" && opts.recenter != "local" && opts.recenter != "none")
    throw std::invalid_argument("two-scale: recenter must be class, local or none");
  const std::size_t N = g.sites();
  const std::size_t K = pu.nodes.size();
  TwoScaleExpansion ex;
  ex.u_hom = u_hom;

  Field Gbar = apply_gradient(u_hom);
  if (!opts.background_slope.empty()) {
    if (static_cast<int>(opts.background_slope.size()) != nd) throw std::invalid_argument("two-scale: bad slope size");
    for (int a = 0; a < nd; ++a)
      for (double& v : Gbar.component(a)) v += opts.background_slope[a];
  }
  ex.xi = local_slopes(Gbar, pu);

  // slope classes, keyed by the quantized slope
  std::map<std::vector<long long>, int> classes;
  std::vector<int> class_of(K), rep_of_class;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<long long> key(nd);
    for (int a = 0; a < nd; ++a) key[a] = std::llround(ex.xi[k][a] / opts.quantum);
    auto [it, fresh] = classes.emplace(key, static_cast<int>(rep_of_class.size()));
    if (fresh) rep_of_class.push_back(static_cast<int>(k));
    class_of[k] = it->second;
  }
  ex.corrector_of.resize(K);
  std::vector<int> solve_node;  // representative node of each solve
  for (std::size_t k = 0; k < K; ++k) {
    if (opts.deduplicate) {
      ex.corrector_of[k] = class_of[k];
    } else {
      ex.corrector_of[k] = static_cast<int>(k);
    }
  }
  if (opts.deduplicate)
    solve_node = rep_of_class;
  else
    for (std::size_t k = 0; k < K; ++k) solve_node.push_back(static_cast<int>(k));

  const int S = static_cast<int>(solve_node.size());
  ex.correctors.resize(S);
  std::vector<std::string> err(S);
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < S; ++s) {
    try {
      ex.correctors[s] = solve_periodic_corrector(omega, fam, ex.xi[solve_node[s]], opts.solver);
      build_flux_corrector(ex.correctors[s]);
    } catch (const std::exception& e) {
      err[s] = e.what();
    }
  }
  for (int s = 0; s < S; ++s)
    if (!err[s].empty()) ex.failures.push_back("node " + std::to_string(solve_node[s]) + ": " + err[s]);
  if (!ex.failures.empty()) return ex;

  // recentering
  const double eps = omega.epsilon > 0 ? omega.epsilon : pu.delta;
  const std::size_t nsig = static_cast<std::size_t>(m) * d * d;
  ex.phi_offset.assign(K, std::vector<double>(m, 0.0));
  ex.sigma_offset.assign(K, std::vector<double>(nsig, 0.0));
  if (opts.recenter != "none") {
    for (std::size_t k = 0; k < K; ++k) {
      const auto& set = ex.correctors[ex.corrector_of[k]];
      const auto& center =
          pu.nodes[opts.recenter == "class" ? rep_of_class[class_of[k]] : static_cast<int>(k)].center;
      const auto ball = lattice_ball(g, center, eps);
      for (auto x : ball) {
        for (int l = 0; l < m; ++l) ex.phi_offset[k][l] += set.phi(l, x);
        for (std::size_t c = 0; c < nsig; ++c) ex.sigma_offset[k][c] += set.sigma(c, x);
      }
      for (double& v : ex.phi_offset[k]) v /= static_cast<double>(ball.size());
      for (double& v : ex.sigma_offset[k]) v /= static_cast<double>(ball.size());
    }
  }

  // cutoff on boxes
  Field psi_field(g, {1});
  for (double& v : psi_field.values()) v = 1.0;
  if (!pu.periodic) {
    const double tau = opts.tau > 0 ? opts.tau : pu.delta * pu.delta / g.length;
    for (std::size_t x = 0; x < N; ++x) {
      const auto p = g.position(x);
      double dist = INFINITY;
      for (int i = 0; i < d; ++i) dist = std::min({dist, p[i], g.length - p[i]});
      psi_field(0, x) = std::min(1.0, dist / tau);
    }
  }
  ex.cutoff = psi_field;

  std::vector<Field> dphi(S);
  for (int s = 0; s < S; ++s) dphi[s] = apply_gradient(ex.correctors[s].phi);

  // accumulate the sums over k
  Field corr_sum(g, {m});          // sum eta_k phi_k
  Field S1(g, {m, d}), S2(g, {m, d}), S3(g, {m, d});
  Field hom_k(g, {m, d}), flux_k(g, {m, d}), flux_bar_k(g, {m, d}), eta_sum(g, {1});
  std::vector<double> Ahom_node(nd), tmp(nd), wv(fam->k()), arg(nd), out(nd);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& node = pu.nodes[k];
    const int s = ex.corrector_of[k];
    const auto& set = ex.correctors[s];
    law.eval(ex.xi[k].data(), Ahom_node.data());
    for (std::size_t i = 0; i < node.sites.size(); ++i) {
      const std::size_t x = node.sites[i];
      const double eta = node.weight[i];
      const auto grad = eta_gradient(pu, node, x, eta);
      bool any_grad = false;
      for (int a = 0; a < d; ++a) any_grad |= grad[a] != 0.0;
      if (eta == 0.0 && !any_grad) continue;
      for (int l = 0; l < m; ++l) {
        const double ph = set.phi(l, x) - ex.phi_offset[k][l];
        corr_sum(l, x) += eta * ph;
        for (int j = 0; j < d; ++j) {
          const int a = l * d + j;
          S1(a, x) += eta * dphi[s](a, x);
          S2(a, x) += ph * grad[j];
          double sg = 0.0;
          for (int i2 = 0; i2 < d; ++i2) {
            const std::size_t c = static_cast<std::size_t>(a) * d + i2;
            sg += (set.sigma(c, x) - ex.sigma_offset[k][c]) * grad[i2];
          }
          S3(a, x) += sg;
        }
      }
      if (eta == 0.0) continue;
      eta_sum(0, x) += eta;
      for (int c = 0; c < fam->k(); ++c) wv[c] = omega.values(c, x);
      for (int a = 0; a < nd; ++a) {
        hom_k(a, x) += eta * Ahom_node[a];
        flux_k(a, x) += eta * set.q(a, x);  // A(omega, xi_k + D+phi_k)
        arg[a] = Gbar(a, x) + dphi[s](a, x);
      }
      fam->eval(wv.data(), arg.data(), out.data());
      for (int a = 0; a < nd; ++a) flux_bar_k(a, x) += eta * out[a];
    }
  }

  // u_hat = u_hom + psi sum eta_k phi_k
  ex.u_hat = u_hom;
  for (int l = 0; l < m; ++l)
    for (std::size_t x = 0; x < N; ++x) ex.u_hat(l, x) += psi_field(0, x) * corr_sum(l, x);

  // residual R = I + II + III, pointwise
  ex.R = Field(g, {m, d});
  if (pu.periodic) {
    std::vector<double> Ab(nd), A1(nd), A2(nd);
    for (std::size_t x = 0; x < N; ++x) {
      for (int c = 0; c < fam->k(); ++c) wv[c] = omega.values(c, x);
      for (int a = 0; a < nd; ++a) arg[a] = Gbar(a, x);
      law.eval(arg.data(), Ab.data());
      for (int a = 0; a < nd; ++a) arg[a] = Gbar(a, x) + S1(a, x);
      fam->eval(wv.data(), arg.data(), A1.data());
      for (int a = 0; a < nd; ++a) arg[a] += S2(a, x);
      fam->eval(wv.data(), arg.data(), A2.data());
      for (int a = 0; a < nd; ++a) {
        const double I = hom_k(a, x) - eta_sum(0, x) * Ab[a] + flux_bar_k(a, x) - flux_k(a, x);
        const double II = -S3(a, x) + A2[a] - A1[a];
        const double III = A1[a] - flux_bar_k(a, x);
        ex.R(a, x) = I + II + III;
      }
    }

    // per-cell bound
    Field D2(g, {1});
    {
      const Field G2 = apply_gradient(Gbar);  // {m, d, d}
      for (std::size_t c = 0; c < G2.components(); ++c)
        for (std::size_t x = 0; x < N; ++x) D2(0, x) += G2(c, x) * G2(c, x);
    }
    const double hd = g.cell_volume();
    const double delta = pu.delta;
    ex.cells.resize(K);
    std::vector<std::vector<std::size_t>> neigh(K);
    for (std::size_t l = 0; l < K; ++l) neigh[l] = pu.neighbors(l);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t l = 0; l < K; ++l) {
      CellResidual cell;
      const auto& node = pu.nodes[l];
      for (std::size_t i = 0; i < node.sites.size(); ++i) {
        const std::size_t x = node.sites[i];
        double r2 = 0.0;
        for (int a = 0; a < nd; ++a) r2 += ex.R(a, x) * ex.R(a, x);
        cell.lhs += node.weight[i] * r2 * hd;
      }
      for (auto x : lattice_ball(g, node.center, 2 * delta)) cell.rhs_second += delta * delta * D2(0, x) * hd;
      const auto big = lattice_ball(g, node.center, 6 * delta);
      const int sl = ex.corrector_of[l];
      for (auto k : neigh[l]) {
        if (k == l) continue;
        const int sk = ex.corrector_of[k];
        double acc = 0.0;
        if (sk == sl) {
          double c2 = 0.0;
          for (int a = 0; a < m; ++a) c2 += std::pow(ex.phi_offset[l][a] - ex.phi_offset[k][a], 2);
          for (std::size_t c = 0; c < nsig; ++c) c2 += std::pow(ex.sigma_offset[l][c] - ex.sigma_offset[k][c], 2);
          acc = c2 * static_cast<double>(big.size());
        } else {
          const auto &Pl = ex.correctors[sl], &Pk = ex.correctors[sk];
          for (auto x : big) {
            for (int a = 0; a < m; ++a)
              acc += std::pow(Pl.phi(a, x) - ex.phi_offset[l][a] - Pk.phi(a, x) + ex.phi_offset[k][a], 2);
            for (std::size_t c = 0; c < nsig; ++c)
              acc += std::pow(Pl.sigma(c, x) - ex.sigma_offset[l][c] - Pk.sigma(c, x) + ex.sigma_offset[k][c], 2);
          }
        }
        cell.rhs_corr += acc * hd / (delta * delta);
      }
      ex.cells[l] = cell;
    }
    double sl = 0.0, sr = 0.0;
    for (const auto& c : ex.cells) {
      sl += c.lhs;
      sr += c.rhs_second + c.rhs_corr;
      if (c.rhs_second + c.rhs_corr > 0) ex.C_hat_max = std::max(ex.C_hat_max, c.lhs / (c.rhs_second + c.rhs_corr));
    }
    ex.C_hat_sum = sr > 0 ? sl / sr : 0.0;
  }

  // equation residual of the expansion
  {
    DivergenceProblem prob(omega, fam, 0.0, pu.periodic ? Boundary::periodic : Boundary::dirichlet_box);
    Field Gh = apply_gradient(ex.u_hat);
    if (!opts.background_slope.empty())
      for (int a = 0; a < nd; ++a)
        for (double& v : Gh.component(a)) v += opts.background_slope[a];
    prob.set_background(Gh);
    Field f = apply_divergence(law_flux(Gbar, law));
    f *= -1.0;
    prob.set_rhs(f);
    const Field F = prob.residual(Field(g, {m}));
    double xmax = 0.0;
    for (const auto& v : ex.xi) xmax = std::max(xmax, norm_of(v));
    const double scale = std::max(xmax, 1e-300) * std::pow(static_cast<double>(g.n), d / 2.0);
    ex.equation_residual = prob.dual_norm(F.values()) / scale;
  }
  return ex;
}

HomogenizationResult homogenization_error_experiment(const HomogenizationConfig& cfg, const EffectiveLaw& law) {
  if (!cfg.family) throw std::invalid_argument("homogenization: missing family");
  if (cfg.eps_over_L.empty()) throw std::invalid_argument("homogenization: empty eps list");
  if (cfg.n_samples < 1) throw std::invalid_argument("homogenization: n_samples >= 1");
  if (cfg.domain != "torus" && cfg.domain != "box") throw std::invalid_argument("homogenization: domain must be torus or box");
  const bool box = cfg.domain == "box";
  const int d = cfg.d;
  const double mass = cfg.mass >= 0 ? cfg.mass : (!box && d <= 2 ? 1.0 : 0.0);
  auto fam = cfg.family->d() == d ? cfg.family : cfg.family->with_dim(d);
  HomogenizationResult res;
  res.law_source = law.source;
  if (!box && d >= 3) res.note = "d >= 3 represented on the torus without massive term (zero-mean data)";
  for (double r : cfg.eps_over_L) {
    const double eps = r * cfg.L;
    cfg.medium.grid(d, cfg.L, eps);  // resolution check up front
    res.eps.push_back(eps);
  }
  const int S = cfg.n_samples, E = static_cast<int>(res.eps.size());
  res.rows.resize(static_cast<std::size_t>(S) * E);
  const double lam = fam->lambda(), Lam = fam->Lambda();
  const double lip_hom = Lam * std::sqrt(Lam / lam);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < S * E; ++t) {
    auto& row = res.rows[t];
    row.epsilon = res.eps[t / S];
    row.sample = t % S;
    row.seed = seed_stream(cfg.base_seed, static_cast<std::uint64_t>(t));
    try {
      const auto omega = cfg.medium.sample(d, cfg.L, row.epsilon, row.seed);
      const auto& g = omega.grid();
      row.n = g.n;
      const Field u_hom = macroscopic_profile(g, cfg.profile, fam->m());
      const Field f = homogenized_rhs(u_hom, law, mass);
      DivergenceProblem prob(omega, fam, mass, box ? Boundary::dirichlet_box : Boundary::periodic);
      prob.set_rhs(f);
      Field u = u_hom;
      const Field Gh = apply_gradient(u_hom);
      const double scale = std::max(1.0, Gh.max_abs());
      const auto st = solve_monotone(prob, u, scale, cfg.opts);
      row.residual = st.residual_norm;
      const Field e = u - u_hom;
      row.l2_error = e.l2_norm();
      if (d >= 3) {
        const double p = 2.0 * d / (d - 2);
        double s = 0.0;
        for (double v : e.values()) s += std::pow(std::abs(v), p);
        row.lp_error = std::pow(s * g.cell_volume(), 1.0 / p);
      }
      row.grad_norm = apply_gradient(u).l2_norm();
      const double gn = Gh.l2_norm(), un = u_hom.l2_norm();
      row.grad_bound = mass > 0 ? (lip_hom * gn + std::sqrt(lip_hom * lip_hom * gn * gn + 4 * lam * mass * un * un)) / (2 * lam)
                                : lip_hom * gn / lam;
      const double delta = cfg.L * std::pow(row.epsilon / cfg.L, cfg.delta_power);
      row.delta = delta;
      row.tau = box ? delta * delta / cfg.L : 0.0;
      if (cfg.two_scale_diagnostic) {
        const auto pu = build_partition(g, delta, !box);
        TwoScaleOptions to;
        to.solver = cfg.opts;
        const auto ex = two_scale_expand(u_hom, pu, omega, fam, law, to);
        if (ex.failures.empty()) row.h1_two_scale = (apply_gradient(u) - apply_gradient(ex.u_hat)).l2_norm();
      }
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  }
  std::vector<double> xs, ys;
  for (int i = 0; i < E; ++i) {
    std::vector<double> v;
    for (int s = 0; s < S; ++s)
      if (res.rows[i * S + s].error.empty()) v.push_back(res.rows[i * S + s].l2_error);
    res.error.push_back(summarize(v));
    if (!v.empty() && res.error.back().mean > 0) {
      xs.push_back(res.eps[i]);
      ys.push_back(res.error.back().mean);
    }
  }
  if (xs.size() >= 3) res.fit = fit_rate(xs, ys);
  return res;
}

}  // namespace homolab
