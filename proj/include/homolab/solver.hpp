#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "homolab/grid.hpp"
#include "homolab/material.hpp"
#include "homolab/randomfield.hpp"
#include "homolab/spectral.hpp"

namespace homolab {

struct SolverOptions {
  double tol = 1e-9;         // threshold = tol * scale * n^{d/2} on ||F||_{P^-1}
  int max_newton = 60;
  int gmres_restart = 40;
  int max_gmres = 2000;      // total inner iterations per linear solve
  double forcing = 1e-4;     // inner relative target of inexact Newton
  int relax_steps = 200;     // Browder-Minty steps per fallback episode
  int max_relax = 20000;
};

struct SolveStats {
  bool converged = false;
  std::string method = "newton";  // "newton", "newton+relaxation", "gmres", "trivial"
  int newton_iterations = 0;
  int linear_iterations = 0;
  int relaxation_steps = 0;
  double residual_norm = 0.0;  // ||F||_{P^-1}
  double threshold = 0.0;
  std::vector<double> history;  // merit per outer iteration
  std::string preconditioner = "fft(-D-.D+ + c)";
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, SolveStats s) : std::runtime_error(what), stats(std::move(s)) {}
  SolveStats stats;
};

/// Discrete problem F(u) = -D-.A(omega, G + D+u) + c u - f = 0 for u with
/// values in R^m, on the torus or on a Dirichlet box (see Boundary).
///
/// G is a constant slope or a per-site field of shape {m, d}; f is optional.
/// With c == 0 on the torus, f must have zero mean and u is normalized to
/// zero mean.
class DivergenceProblem {
 public:
  DivergenceProblem(const ParameterField& omega, FamilyPtr fam, double mass, Boundary b = Boundary::periodic);

  void set_slope(std::span<const double> xi);
  void set_background(const Field& G);
  void set_rhs(const Field& f);

  const PeriodicGrid& grid() const { return omega_->grid(); }
  const OperatorFamily& family() const { return *fam_; }
  FamilyPtr family_ptr() const { return fam_; }
  const ParameterField& omega() const { return *omega_; }
  double mass() const { return mass_; }
  Boundary boundary() const { return boundary_; }
  int m() const { return fam_->m(); }

  /// G + D+u, shape {m, d}.
  Field total_gradient(const Field& u) const;
  /// A(omega, G + D+u), shape {m, d}.
  Field flux(const Field& u) const;
  Field residual(const Field& u) const;

  /// Stores the site Jacobians d_xi A(omega, G + D+u) (transposed when adjoint).
  void linearize(const Field& u, bool adjoint = false);
  /// out = -D-.(a D+v) + c v with the stored Jacobians.
  void apply_jacobian(std::span<const double> v, std::span<double> out) const;
  /// a(x) G(x) with the stored Jacobians, G of shape {m, d}.
  Field apply_coefficient(const Field& G) const;
  /// out = P^{-1} r, P = -D-.D+ + c (zero mode dropped when c == 0).
  void precondition(std::span<const double> r, std::span<double> out) const;
  /// sqrt(<r, P^{-1} r>).
  double dual_norm(std::span<const double> r) const;
  void mask(std::span<double> v) const;

 private:
  std::shared_ptr<const ParameterField> omega_;
  FamilyPtr fam_;
  double mass_;
  Boundary boundary_;
  std::vector<double> slope_;
  Field background_;
  bool has_background_ = false;
  Field rhs_;
  bool has_rhs_ = false;
  std::vector<double> jac_;  // site-major (md)^2 per site
};

using LinearOp = std::function<void(std::span<const double>, std::span<double>)>;

struct GmresResult {
  int iterations = 0;
  double residual = 0.0;  // ||b - Jx||_{P^-1}
  bool converged = false;
};

/// Restarted GMRES for J x = b in the energy inner product of P,
/// <u, v>_P = <P u, v>, left-preconditioned by P^{-1}. The Krylov residual
/// it minimizes is ||b - Jx||_{P^-1}, the same dual norm that terminates
/// the outer iteration. J need not be symmetric. x holds the initial guess.
GmresResult gmres_energy(const LinearOp& J, const LinearOp& Pinv, std::span<const double> b, std::span<double> x,
                         double target, int restart, int max_iter);

/// Newton with Armijo backtracking on ||F||_{P^-1}; falls back to the
/// Browder-Minty relaxation u <- u - tau P^{-1}F(u), tau = l/L^2 with
/// l = min(lambda, 1), L = max(Lambda, 1), when Newton stalls.
/// `scale` sets the threshold tol * scale * n^{d/2}. Throws SolverError.
SolveStats solve_monotone(DivergenceProblem& prob, Field& u, double scale, const SolverOptions& opts);

/// Linear solve J v = b with the problem's stored Jacobians.
SolveStats solve_linearized(const DivergenceProblem& prob, const Field& b, Field& v, double scale,
                            const SolverOptions& opts);

}  // namespace homolab
