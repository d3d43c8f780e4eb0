#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "homolab/grid.hpp"
#include "homolab/material.hpp"
#include "homolab/randomfield.hpp"
#include "homolab/solver.hpp"

namespace homolab {

inline constexpr double kInfiniteT = std::numeric_limits<double>::infinity();

/// Corrector phi_xi (or its localized version for finite T) with flux,
/// flux corrector and optional potential on one grid.
struct CorrectorSet {
  PeriodicGrid grid;
  std::vector<double> xi;  // m x d, row-major
  double T = kInfiniteT;
  Field phi;    // {m}
  Field q;      // {m, d}: A(omega, xi + D+phi)
  Field sigma;  // {m, d, d}, empty until build_flux_corrector
  std::optional<Field> theta;  // {m, d}
  double residual_norm = 0.0;
  double tolerance = 0.0;
  SolveStats stats;
  std::vector<std::string> warnings;
  std::shared_ptr<const ParameterField> omega;
  FamilyPtr family;

  double mass() const { return std::isinf(T) ? 0.0 : 1.0 / T; }
  bool has_sigma() const { return sigma.components() > 0; }
  /// Site mean of q, the flux average of this realization.
  std::vector<double> mean_flux() const;
  /// Identity residual ||D-.sigma - (q - qbar)||_2 / ||q - qbar||_2, once sigma is built.
  double sigma_identity_error = 0.0;
  double sigma_identity_constant = 0.0;  // C_id = error / (h ||q||_{H^1})
};

/// Linearized corrector phi_{xi,Xi} with coefficient d_xi A(omega, xi + D+phi_xi)
/// (transposed when adjoint).
struct LinearizedCorrector {
  const CorrectorSet* base = nullptr;
  std::vector<double> Xi;
  bool adjoint = false;
  Field phi;
  std::optional<Field> sigma;
  std::optional<Field> theta;
  SolveStats stats;
};

struct MinimalRadiusConfig {
  double K_mass = 8.0;
  double dyadic_max = 0.0;  // 0: 4 sqrt(T), or L/2 for T = inf
};

struct MinimalRadius {
  double radius = 0.0;
  bool capped = false;  // cap reached without the conditions holding
  std::vector<double> scanned;
  std::vector<double> variance_ratio;  // (1/R^2) avg |phi - avg phi|^2 / |xi|^2
  std::vector<double> mass_ratio;      // |avg phi| / (sqrt(T) K_mass |xi|)
};

/// Periodic cell problem -D-.A(omega, xi + D+phi) = 0, mean(phi) = 0.
/// |xi| = 0 short-circuits to phi = 0. `init` seeds the iteration.
CorrectorSet solve_periodic_corrector(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                      const SolverOptions& opts = {}, const Field* init = nullptr);

/// Localized corrector -D-.A(omega, xi + D+phi) + phi/T = 0. Requires
/// T >= 2 eps^2 (when omega carries eps); warns when L < 8 sqrt(T).
CorrectorSet solve_localized_corrector(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                       double T, const SolverOptions& opts = {}, const Field* init = nullptr);

/// sigma_{l,jk} from (-D-.D+ + 1/T) sigma_jk = C_j q_k - C_k q_j (C centered
/// differences), assembled for j < k and copied with opposite sign.
void build_flux_corrector(CorrectorSet& set);

/// theta_i from D-.D+ theta_i = C_i (phi - mean phi), zero-mean solve. Input {m}, output {m, d}.
Field build_potential(const Field& phi);

/// ||D-.theta - (phi - mean phi)||_2 for a potential.
double potential_identity_error(const Field& phi, const Field& theta);

LinearizedCorrector solve_linearized_corrector(const CorrectorSet& set, std::span<const double> Xi, bool adjoint,
                                               const SolverOptions& opts = {});

MinimalRadius minimal_radius(const CorrectorSet& set, const MinimalRadiusConfig& cfg, std::size_t x0);

struct LocalizationGap {
  double T = 0.0;
  double gradient_part = 0.0;  // avg |D+phi^{2T} - D+phi^T|^2
  double mass_part = 0.0;      // avg |phi^{2T} - phi^T|^2 / T
  /// sqrt(avg(|D+dphi|^2 + |dphi|^2/T)), the quantity decaying like (eps/sqrt T)^{d/2}.
  double gap() const { return std::sqrt(gradient_part + mass_part); }
};

LocalizationGap localization_gap(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi, double T,
                                 const SolverOptions& opts = {});

/// Energy ratio avg(|D+phi|^2 + |phi|^2/T) / |xi|^2.
double energy_constant(const CorrectorSet& set);

/// Response of the localized corrector to replacing omega by `value` in the
/// ball B_radius about the torus center.
struct PerturbationResponse {
  std::vector<double> radii;    // annulus mid-radii
  std::vector<double> density;  // annulus mean of |D+dphi|^2 + |dphi|^2/T
  double gamma_hat = 0.0;       // density ~ exp(-2 gamma r / sqrt(T))
  double r_squared = 0.0;
  double ratio_at_10 = 0.0;     // density(10 sqrt T) / density(near the perturbation)
  int fit_points = 0;
};

PerturbationResponse perturbation_response(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                                           double T, double radius, double value, const SolverOptions& opts = {});

/// Snapshot of phi, q, sigma (when present) plus a JSON sidecar with xi, T,
/// tolerances, residuals and iteration counts. Returns the written paths.
std::vector<std::filesystem::path> write_corrector_snapshot(const CorrectorSet& set,
                                                            const std::filesystem::path& stem);

}  // namespace homolab
