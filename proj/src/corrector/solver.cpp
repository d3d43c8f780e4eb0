#include "homolab/solver.hpp"

#include <algorithm>
#include <cmath>

#include "homolab/kernels.hpp"

namespace homolab {

DivergenceProblem::DivergenceProblem(const ParameterField& omega, FamilyPtr fam, double mass, Boundary b)
    : omega_(std::make_shared<const ParameterField>(omega)), fam_(std::move(fam)), mass_(mass), boundary_(b) {
  if (!fam_) throw std::invalid_argument("problem: null operator family");
  if (fam_->d() != omega.grid().dim) fam_ = fam_->with_dim(omega.grid().dim);
  if (fam_->k() != omega.channels())
    throw std::invalid_argument("problem: family expects k = " + std::to_string(fam_->k()) + " parameter channels, field has " +
                                std::to_string(omega.channels()));
  if (!(mass >= 0.0)) throw std::invalid_argument("problem: mass must be >= 0");
  slope_.assign(fam_->size(), 0.0);
}

void DivergenceProblem::set_slope(std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != fam_->size()) throw std::invalid_argument("problem: slope has wrong size");
  slope_.assign(xi.begin(), xi.end());
}

void DivergenceProblem::set_background(const Field& G) {
  if (!(G.grid() == grid()) || G.shape() != Shape{m(), grid().dim})
    throw std::invalid_argument("problem: background must have shape {m, d} on the problem grid");
  background_ = G;
  has_background_ = true;
}

void DivergenceProblem::set_rhs(const Field& f) {
  if (!(f.grid() == grid()) || static_cast<int>(f.components()) != m())
    throw std::invalid_argument("problem: rhs must have m components on the problem grid");
  rhs_ = f;
  if (rhs_.shape().empty()) rhs_ = Field(grid(), {m()}, std::vector<double>(f.values().begin(), f.values().end()));
  has_rhs_ = true;
}

void DivergenceProblem::mask(std::span<double> v) const {
  if (boundary_ == Boundary::dirichlet_box) apply_dirichlet_mask(grid(), v, v.size() / grid().sites());
}

Field DivergenceProblem::total_gradient(const Field& u) const {
  Field g = apply_gradient(u);
  const std::size_t N = grid().sites();
  if (has_background_) {
    g += background_;
  } else {
    for (std::size_t a = 0; a < slope_.size(); ++a) {
      auto c = g.component(a);
      const double s = slope_[a];
      for (std::size_t x = 0; x < N; ++x) c[x] += s;
    }
  }
  return g;
}

Field DivergenceProblem::flux(const Field& u) const {
  Field G = total_gradient(u);
  Field q(grid(), G.shape());
  const std::size_t N = grid().sites();
  const int n = fam_->size(), k = fam_->k();
  const auto& w = omega_->values;
#pragma omp parallel
  {
    std::vector<double> xi(n), out(n), om(k);
#pragma omp for schedule(static)
    for (std::size_t x = 0; x < N; ++x) {
      for (int c = 0; c < k; ++c) om[c] = w(c, x);
      for (int a = 0; a < n; ++a) xi[a] = G(a, x);
      fam_->eval(om.data(), xi.data(), out.data());
      for (int a = 0; a < n; ++a) q(a, x) = out[a];
    }
  }
  return q;
}

Field DivergenceProblem::residual(const Field& u) const {
  Field F = apply_divergence(flux(u));
  F *= -1.0;
  if (mass_ > 0.0) kernels::axpy(mass_, u.values(), F.values());
  if (has_rhs_) kernels::axpy(-1.0, rhs_.values(), F.values());
  mask(F.values());
  return F;
}

void DivergenceProblem::linearize(const Field& u, bool adjoint) {
  Field G = total_gradient(u);
  const std::size_t N = grid().sites();
  const int n = fam_->size(), k = fam_->k();
  jac_.assign(N * n * n, 0.0);
  const auto& w = omega_->values;
#pragma omp parallel
  {
    std::vector<double> xi(n), J(n * n), om(k);
#pragma omp for schedule(static)
    for (std::size_t x = 0; x < N; ++x) {
      for (int c = 0; c < k; ++c) om[c] = w(c, x);
      for (int a = 0; a < n; ++a) xi[a] = G(a, x);
      fam_->d_xi(om.data(), xi.data(), J.data());
      double* dst = jac_.data() + x * n * n;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) dst[a * n + b] = adjoint ? J[b * n + a] : J[a * n + b];
    }
  }
}

void DivergenceProblem::apply_jacobian(std::span<const double> v, std::span<double> out) const {
  const auto& g = grid();
  const std::size_t N = g.sites();
  const std::size_t mm = static_cast<std::size_t>(m()), n = mm * g.dim;
  if (jac_.size() != N * n * n) throw std::logic_error("problem: apply_jacobian before linearize");
  std::vector<double> grad(n * N), t(n * N);
  kernels::gradient(g, mm, v, grad);
  kernels::site_matvec(N, n, n, jac_, grad, t);
  kernels::divergence(g, mm, t, out);
  kernels::scale(-1.0, out);
  if (mass_ > 0.0) kernels::axpy(mass_, v, out);
  mask(out);
}

Field DivergenceProblem::apply_coefficient(const Field& G) const {
  const std::size_t N = grid().sites();
  const std::size_t n = static_cast<std::size_t>(fam_->size());
  if (jac_.size() != N * n * n) throw std::logic_error("problem: apply_coefficient before linearize");
  Field out(grid(), G.shape());
  kernels::site_matvec(N, n, n, jac_, G.values(), out.values());
  return out;
}

void DivergenceProblem::precondition(std::span<const double> r, std::span<double> out) const {
  auto& solver = SpectralSolver::local(grid(), boundary_);
  const std::size_t N = grid().sites();
  const std::size_t comps = r.size() / N;
  for (std::size_t c = 0; c < comps; ++c) solver.solve(mass_, r.subspan(c * N, N), out.subspan(c * N, N));
}

double DivergenceProblem::dual_norm(std::span<const double> r) const {
  std::vector<double> z(r.size());
  precondition(r, z);
  return std::sqrt(std::max(0.0, kernels::dot(r, z)));
}

GmresResult gmres_energy(const LinearOp& J, const LinearOp& Pinv, std::span<const double> b, std::span<double> x,
                         double target, int restart, int max_iter) {
  const std::size_t N = b.size();
  GmresResult res;
  std::vector<std::vector<double>> V, PV;  // basis and P * basis
  std::vector<double> r(N), w(N), Pw(N);
  restart = std::max(1, restart);
  while (true) {
    J(x, r);
    for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
    Pinv(r, w);
    const double beta = std::sqrt(std::max(0.0, kernels::dot(r, w)));
    res.residual = beta;
    if (beta <= target) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= max_iter) return res;
    V.assign(1, w);
    PV.assign(1, r);
    kernels::scale(1.0 / beta, V[0]);
    kernels::scale(1.0 / beta, PV[0]);
    std::vector<std::vector<double>> H;  // columns of the Hessenberg matrix
    std::vector<double> cs, sn, gvec{beta};
    int j = 0;
    for (; j < restart && res.iterations < max_iter; ++j) {
      ++res.iterations;
      J(V[j], Pw);
      Pinv(Pw, w);
      std::vector<double> h(j + 2, 0.0);
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) {
          const double hij = kernels::dot(Pw, V[i]);
          h[i] += hij;
          kernels::axpy(-hij, V[i], w);
          kernels::axpy(-hij, PV[i], Pw);
        }
      const double hn = std::sqrt(std::max(0.0, kernels::dot(Pw, w)));
      h[j + 1] = hn;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h[i] + sn[i] * h[i + 1];
        h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
        h[i] = t;
      }
      const double den = std::hypot(h[j], h[j + 1]);
      const double c = den > 0 ? h[j] / den : 1.0, s = den > 0 ? h[j + 1] / den : 0.0;
      cs.push_back(c);
      sn.push_back(s);
      h[j] = den;
      h[j + 1] = 0.0;
      gvec.push_back(-s * gvec[j]);
      gvec[j] *= c;
      H.push_back(h);
      res.residual = std::abs(gvec[j + 1]);
      if (res.residual <= target || hn <= 1e-300) {
        ++j;
        break;
      }
      V.push_back(w);
      PV.push_back(Pw);
      kernels::scale(1.0 / hn, V.back());
      kernels::scale(1.0 / hn, PV.back());
    }
    // back substitution
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = gvec[i];
      for (int l = i + 1; l < j; ++l) s -= H[l][i] * y[l];
      y[i] = s / H[i][i];
    }
    for (int i = 0; i < j; ++i) kernels::axpy(y[i], V[i], x);
    if (res.iterations >= max_iter && res.residual > target) {
      // report the true residual
      J(x, r);
      for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - r[i];
      Pinv(r, w);
      res.residual = std::sqrt(std::max(0.0, kernels::dot(r, w)));
      res.converged = res.residual <= target;
      return res;
    }
  }
}

namespace {

double threshold_for(const DivergenceProblem& prob, double scale, double tol) {
  return tol * scale * std::pow(static_cast<double>(prob.grid().n), prob.grid().dim / 2.0);
}

void normalize_mean(const DivergenceProblem& prob, Field& u) {
  if (prob.boundary() != Boundary::periodic || prob.mass() > 0.0) return;
  for (std::size_t c = 0; c < u.components(); ++c) {
    const double m = u.mean(c);
    for (double& v : u.component(c)) v -= m;
  }
}

}  // namespace

SolveStats solve_monotone(DivergenceProblem& prob, Field& u, double scale, const SolverOptions& opts) {
  SolveStats st;
  st.threshold = threshold_for(prob, scale, opts.tol);
  const std::size_t M = u.values().size();
  prob.mask(u.values());
  Field F = prob.residual(u);
  double phi = prob.dual_norm(F.values());
  st.history.push_back(phi);
  const auto& fam = prob.family();
  const double lo = std::min(fam.lambda(), 1.0), hi = std::max(fam.Lambda(), 1.0);
  const double tau = lo / (hi * hi);
  std::vector<double> delta(M), z(M), rhs(M);
  LinearOp J = [&](std::span<const double> in, std::span<double> out) { prob.apply_jacobian(in, out); };
  LinearOp P = [&](std::span<const double> in, std::span<double> out) { prob.precondition(in, out); };
  int stalls = 0;
  while (phi > st.threshold) {
    if (st.newton_iterations >= opts.max_newton || st.relaxation_steps >= opts.max_relax) {
      st.residual_norm = phi;
      throw SolverError("monotone solver did not converge: residual " + std::to_string(phi) + " > threshold " +
                            std::to_string(st.threshold),
                        st);
    }
    bool accepted = false;
    if (stalls < 2) {
      ++st.newton_iterations;
      prob.linearize(u);
      for (std::size_t i = 0; i < M; ++i) rhs[i] = -F.values()[i];
      std::fill(delta.begin(), delta.end(), 0.0);
      const double target = std::max(opts.forcing * phi, 0.25 * st.threshold);
      auto g = gmres_energy(J, P, rhs, delta, target, opts.gmres_restart, opts.max_gmres);
      st.linear_iterations += g.iterations;
      double alpha = 1.0;
      for (int bt = 0; bt < 8; ++bt, alpha *= 0.5) {
        Field trial = u;
        kernels::axpy(alpha, delta, trial.values());
        Field Ft = prob.residual(trial);
        const double pt = prob.dual_norm(Ft.values());
        if (std::isfinite(pt) && pt <= (1.0 - 1e-4 * alpha) * phi) {
          accepted = true;
          stalls = pt > 0.9 * phi ? stalls + 1 : 0;
          u = std::move(trial);
          F = std::move(Ft);
          phi = pt;
          break;
        }
      }
      if (!accepted) ++stalls;
    } else {
      // Browder-Minty relaxation: globally convergent for monotone, Lipschitz F.
      st.method = "newton+relaxation";
      for (int s = 0; s < opts.relax_steps && phi > st.threshold; ++s) {
        prob.precondition(F.values(), z);
        kernels::axpy(-tau, z, u.values());
        F = prob.residual(u);
        phi = prob.dual_norm(F.values());
        ++st.relaxation_steps;
      }
      stalls = 0;
    }
    st.history.push_back(phi);
  }
  normalize_mean(prob, u);
  st.residual_norm = phi;
  st.converged = true;
  return st;
}

SolveStats solve_linearized(const DivergenceProblem& prob, const Field& b, Field& v, double scale,
                            const SolverOptions& opts) {
  SolveStats st;
  st.method = "gmres";
  st.threshold = threshold_for(prob, scale, opts.tol);
  LinearOp J = [&](std::span<const double> in, std::span<double> out) { prob.apply_jacobian(in, out); };
  LinearOp P = [&](std::span<const double> in, std::span<double> out) { prob.precondition(in, out); };
  std::vector<double> rhs(b.values().begin(), b.values().end());
  prob.mask(rhs);
  auto g = gmres_energy(J, P, rhs, v.values(), st.threshold, opts.gmres_restart, opts.max_gmres);
  st.linear_iterations = g.iterations;
  st.residual_norm = g.residual;
  st.history.push_back(g.residual);
  st.converged = g.converged;
  if (!g.converged)
    throw SolverError("linearized solve did not converge after " + std::to_string(g.iterations) +
                          " GMRES iterations (preconditioner fft(-D-.D+ + c)); residual " + std::to_string(g.residual),
                      st);
  normalize_mean(prob, v);
  return st;
}

}  // namespace homolab
