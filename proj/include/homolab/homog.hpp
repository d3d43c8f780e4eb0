#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "homolab/corrector.hpp"
#include "homolab/stats.hpp"

namespace homolab {

struct RveEstimate {
  std::vector<double> xi;
  std::vector<double> value;  // m x d, row-major
  std::string kind = "periodic";
  double T = kInfiniteT;
  double L = 0.0;
  int n = 0;
  int d = 0;
  std::uint64_t seed = 0;
  double residual = 0.0;
  int iterations = 0;  // Newton + linear
  std::string method;
};

/// Site mean of the flux of the periodic corrector.
RveEstimate rve_periodic(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi,
                         const SolverOptions& opts = {});

/// Weight eta >= 0 with h^d sum eta = 1, supported in a ball of radius
/// `radius` (0: L/8) about the torus center shifted by `offset`.
struct WeightSpec {
  std::string profile = "bump";  // "bump": exp(-1/(1-t^2)); "cosine": cos^2(pi t / 2)
  double radius = 0.0;
  std::array<double, 3> offset{};
};

Field make_weight(const PeriodicGrid& g, const WeightSpec& w);

/// Localized RVE: for each basis direction Xi = e_a, the action
///   h^d sum eta (q_a - phi^T . phi*_{xi,Xi} / T)
/// with phi* the adjoint linearized localized corrector. Needs radius <= L/8
/// and, when omega carries eps, 2 eps^2 <= T <= (L/8)^2.
RveEstimate rve_localized(const ParameterField& omega, FamilyPtr fam, std::span<const double> xi, double T,
                          const WeightSpec& weight = {}, const SolverOptions& opts = {});

/// Solves A(omega, z) = q for scalar z (m = d = 1) by safeguarded Newton.
/// Throws std::runtime_error when q cannot be bracketed.
double invert_scalar_law(const OperatorFamily& fam, const double* omega, double q, double root_tol = 1e-14);

/// The constant flux q with mean_x A(omega(x), .)^{-1}(q) = xi on a d = 1 lattice.
double oracle_1d(const ParameterField& omega, const OperatorFamily& fam, double xi, double root_tol = 1e-14);

/// Same with the site average replaced by the expectation over the one-point
/// law omega = theta(Y), Y ~ N(0, 1): the effective law of the sampled d = 1
/// lattice medium. Gauss-Hermite with `nodes` points.
double oracle_1d_law(const OperatorFamily& fam, const ClampSpec& clamp, double xi, int nodes = 120,
                     double root_tol = 1e-14);

/// Random medium recipe: kernel shape, clamp, channels and eps/h.
struct MediumSpec {
  KernelShape shape = KernelShape::gaussian_bump;
  ClampSpec clamp{};
  int k = 1;
  int resolution = 4;  // eps / h, power of two

  ParameterField sample(int d, double L, double epsilon, std::uint64_t seed) const;
  /// Grid with n = resolution L / eps; throws unless that is a power of two >= 4.
  PeriodicGrid grid(int d, double L, double epsilon) const;
};

struct StructureConfig {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> xi_pairs;
  std::vector<std::vector<double>> frame_rotations;     // m x m, row-major
  std::vector<std::vector<double>> isotropy_rotations;  // d x d, row-major
  std::vector<double> xi;  // base slope of the rotation checks
  int n_samples = 20;
  std::uint64_t base_seed = 1;
  SolverOptions opts{};
};

struct StructureReport {
  double monotone_min = INFINITY;   // min over samples and pairs of dA.dxi / |dxi|^2
  double lipschitz_max = 0.0;       // max |dA| / |dxi|
  double lambda = 0.0, Lambda = 0.0;
  double lipschitz_bound = 0.0;     // 4 Lambda^2 / lambda
  double mean_monotone_min = INFINITY;  // same for the seed-averaged law
  double frame_max_dev = 0.0;       // max |mean(A(O xi) - O A(xi))|
  double frame_max_z = 0.0;         // max |mean| / se (se floored)
  double iso_max_dev = 0.0;
  double iso_max_z = 0.0;
  int samples = 0;
  bool monotone_pass = false, lipschitz_pass = false, frame_pass = true, iso_pass = true;
  bool all_pass() const { return monotone_pass && lipschitz_pass && frame_pass && iso_pass; }
};

StructureReport structure_checks(FamilyPtr fam, const FieldSampler& sampler, const StructureConfig& cfg);

/// One Monte Carlo sample of an RVE sweep.
struct McRow {
  double L = 0.0;
  int n = 0;
  int sample = 0;
  std::uint64_t seed = 0;
  std::vector<double> value;
  double residual = 0.0;
  std::string error;  // nonempty when the solve failed
  double control = 0.0;  // mean_x A(omega(x), .)^{-1}(q_ref), when a control flux is set
};

struct SweepConfig {
  int d = 1;
  double epsilon = 1.0;
  std::vector<double> L_over_eps;
  int n_samples = 100;
  std::uint64_t base_seed = 1;
  std::vector<double> xi;
  FamilyPtr family;
  MediumSpec medium{};
  SolverOptions opts{};
  int component = 0;  // flux component used for the fit
  /// d = m = k = 1: the reference flux q_ref of oracle_1d_law. Enables the
  /// control variate Z = mean_x A(omega(x), .)^{-1}(q_ref), E[Z] = xi exactly.
  std::optional<double> control_flux;
};

struct SweepLevel {
  double L = 0.0;
  SampleSummary stats;  // of the fitted component
  double bias = 0.0, bias_se = 0.0;  // systematic experiment only
  int failures = 0;
};

struct FluctuationResult {
  std::vector<McRow> rows;
  std::vector<SweepLevel> levels;
  std::optional<RateFit> fit;  // log sd vs log(L/eps); empty when sd vanishes or n_samples = 1
};

/// Samples rve_periodic over (L, seed) tasks, seed = seed_stream(base_seed, task).
std::vector<McRow> rve_sweep(const SweepConfig& cfg);

FluctuationResult fluctuation_experiment(const SweepConfig& cfg);

struct SystematicResult {
  std::vector<McRow> rows;
  std::vector<SweepLevel> levels;
  double reference = 0.0, reference_se = 0.0;
  std::optional<RateFit> fit;  // log |bias| vs log(L/eps)
  bool inconclusive = false;   // some |bias| within 2 se of zero
  bool bias_below_sd = false;  // at the largest L
};

/// E[d/dq A(omega, .)^{-1}(q)] over the one-point law (d = m = k = 1).
double law_inverse_slope(const OperatorFamily& fam, const ClampSpec& clamp, double q, int nodes = 120);

/// Bias of the seed mean against `reference` (with its standard error).
/// With cfg.control_flux set, the mean of q_L is estimated by the unbiased
/// control-variate average of q_L + (Z - xi) / E[dZ/dq], which removes the
/// leading O((L/eps)^{-1/2}) fluctuation and leaves the O((L/eps)^{-1}) bias.
SystematicResult systematic_experiment(const SweepConfig& cfg, double reference, double reference_se = 0.0);

/// Seed means of two localized-RVE weights on the same samples.
struct WeightComparison {
  SampleSummary first, second, difference;  // difference is paired
  double combined_se = 0.0;                 // sqrt(se1^2 + se2^2)
  double z = 0.0;                           // |mean1 - mean2| / combined_se
  int samples = 0;
};

WeightComparison weight_independence(const SweepConfig& cfg, double L_over_eps, double T, const WeightSpec& w1,
                                     const WeightSpec& w2);

}  // namespace homolab
