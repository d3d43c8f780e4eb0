#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "homolab/homog.hpp"

namespace homolab {

/// Partition of unity on the lattice: K = delta Z^d inside the domain,
/// eta_k(x) = prod_i psi((x_i - k_i) / delta) with psi(t) = cos^2(pi t / 2)
/// on |t| < 1, so the translates sum to one exactly and supp eta_k lies in
/// the cube of half-width delta (inside B_{2 delta}(k) for d <= 3).
struct PartitionOfUnity {
  struct Node {
    std::array<double, 3> center{};
    std::vector<std::size_t> sites;  // support
    std::vector<double> weight;      // eta_k on the support
  };
  PeriodicGrid grid;
  double delta = 0.0;
  bool periodic = true;
  std::vector<Node> nodes;
  double gradient_constant = 0.0;  // measured max delta |D+ eta_k|
  int max_overlap = 0;             // max number of bumps covering a site
  int max_neighbors = 0;           // max #(K cap B_{4 delta}(k))

  /// Dense eta_k.
  Field dense(std::size_t k) const;
  /// max_x |sum_k eta_k(x) - 1|.
  double sum_defect() const;
  /// Nodes within 4 delta of node k (k included).
  std::vector<std::size_t> neighbors(std::size_t k) const;
};

/// Torus: delta must divide L. Box (periodic = false): nodes on the closed
/// box [0, L]^d, sites with a zero coordinate index are boundary. Rejects delta < 4h.
PartitionOfUnity build_partition(const PeriodicGrid& g, double delta, bool periodic = true);

/// xi_k = (sum eta_k)^-1 sum eta_k g for g of shape {m, d}; row-major m x d.
std::vector<std::vector<double>> local_slopes(const Field& g, const PartitionOfUnity& pu);

/// Effective law xi -> A_hom(xi) used in the expansion and the right-hand sides.
struct EffectiveLaw {
  std::function<void(const double* xi, double* out)> eval;
  int m = 1, d = 1;
  std::string source;
};

/// A_hom(xi) = M xi with M of size (md) x (md), row-major.
EffectiveLaw linear_effective_law(int m, int d, std::vector<double> M, std::string source);

/// d = m = 1 law tabulated from oracle_1d_law on [-xi_max, xi_max] with cubic
/// Hermite interpolation (slopes from law_inverse_slope); odd extension outside.
EffectiveLaw tabulated_effective_law_1d(const OperatorFamily& fam, const ClampSpec& clamp, double xi_max,
                                        int points = 257);

/// Matrix of a linear family's effective law from one periodic RVE per basis
/// direction, averaged over `samples` media from the sampler.
EffectiveLaw rve_effective_law(FamilyPtr fam, const FieldSampler& sampler, int samples, std::uint64_t base_seed,
                               const SolverOptions& opts, double* standard_error = nullptr);

struct TwoScaleOptions {
  SolverOptions solver{};
  bool deduplicate = true;
  double quantum = 1e-12;  // slopes equal after rounding to this grid share a corrector
  /// "class": subtract the B_eps average about the first node of each slope
  /// class; "local": about each node; "none": keep the zero-mean periodic corrector.
  std::string recenter = "class";
  double tau = 0.0;  // box only: width of the linear boundary cutoff (0: delta^2 / L)
  /// Affine part of u_hom (m x d): the expansion is about u_hom + slope . x,
  /// which lets a constant macroscopic gradient live on the torus.
  std::vector<double> background_slope;
};

struct CellResidual {
  double lhs = 0.0;        // h^d sum eta_l |R|^2
  double rhs_second = 0.0; // h^d sum_{B_2delta(l)} delta^2 |D^2 u|^2
  double rhs_corr = 0.0;   // delta^-2 sum_{k~l} h^d sum_{B_6delta(l)} |phi_l-phi_k|^2 + |sigma_l-sigma_k|^2
};

struct TwoScaleExpansion {
  Field u_hom;
  std::vector<std::vector<double>> xi;  // per node
  std::vector<int> corrector_of;        // node -> corrector index
  /// phi_k = correctors[corrector_of[k]].phi - phi_offset[k] (per component), same for sigma.
  std::vector<std::vector<double>> phi_offset, sigma_offset;
  std::vector<CorrectorSet> correctors; // distinct solves, with sigma
  Field cutoff;                         // box only: psi, 1 away from the tau layer
  Field u_hat;
  Field R;                              // {m, d}, I + II + III
  std::vector<CellResidual> cells;
  double C_hat_max = 0.0;               // max_l lhs / rhs
  double C_hat_sum = 0.0;               // sum lhs / sum rhs
  double equation_residual = 0.0;       // ||-D-.A(D+u_hat) + D-.A_hom(D+u_hom)||_{P^-1} / (|xi|_max n^{d/2})
  std::vector<std::string> failures;    // "node k: ..." per failed solve
};

TwoScaleExpansion two_scale_expand(const Field& u_hom, const PartitionOfUnity& pu, const ParameterField& omega,
                                   FamilyPtr fam, const EffectiveLaw& law, const TwoScaleOptions& opts = {});

/// Smooth macroscopic profiles on the torus ("mode", "gaussian") or vanishing
/// on the box boundary ("box_mode", "poly_cutoff"); scalar, shape {m}.
Field macroscopic_profile(const PeriodicGrid& g, const std::string& name, int m = 1, double amplitude = 1.0);

/// Right-hand side f = -D-.A_hom(D+u_hom) + c u_hom.
Field homogenized_rhs(const Field& u_hom, const EffectiveLaw& law, double mass);

struct HomogenizationConfig {
  int d = 1;
  double L = 1.0;
  std::vector<double> eps_over_L;  // sweep
  int n_samples = 20;
  std::uint64_t base_seed = 1;
  FamilyPtr family;
  MediumSpec medium{};
  std::string profile = "mode";
  std::string domain = "torus";  // "torus" or "box"
  double mass = -1.0;            // -1: 1 for d <= 2 on the torus, 0 otherwise
  SolverOptions opts{};
  bool two_scale_diagnostic = false;  // also report ||D+u_eps - D+u_hat||
  double delta_power = 1.0;           // delta = eps^p (in units of L); 1/2 on boxes in the proofs
};

struct HomogenizationRow {
  double epsilon = 0.0;
  int n = 0;
  int sample = 0;
  std::uint64_t seed = 0;
  double l2_error = 0.0;
  double lp_error = 0.0;  // L^{2d/(d-2)} for d >= 3, else 0
  double h1_two_scale = NAN;
  double residual = 0.0;
  double delta = 0.0, tau = 0.0;
  double grad_norm = 0.0, grad_bound = 0.0;  // energy-control audit
  std::string error;
};

struct HomogenizationResult {
  std::vector<HomogenizationRow> rows;
  std::vector<double> eps;
  std::vector<SampleSummary> error;  // per eps
  std::optional<RateFit> fit;        // log mean error vs log eps
  std::string law_source;
  std::string note;
};

HomogenizationResult homogenization_error_experiment(const HomogenizationConfig& cfg, const EffectiveLaw& law);

}  // namespace homolab
