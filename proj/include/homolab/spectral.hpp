#pragma once

#include <array>
#include <complex>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "homolab/grid.hpp"

namespace homolab {

/// How the lattice boundary is treated by constant-coefficient solves.
///
/// `dirichlet_box` pins every site with some coordinate index 0 to zero.
/// On the n^d torus this leaves the (n-1)^d interior sites of the box
/// [0, L]^d whose faces x_i = 0 and x_i = L are identified with index 0,
/// so the same forward/backward difference kernels act as the Dirichlet
/// stencil.
enum class Boundary { periodic, dirichlet_box };

/// Guards FFTW plan creation/destruction (the planner is not re-entrant).
std::mutex& fftw_planner_mutex();

/// Symbol of -D-.D+ at integer wavevector k: sum_i (4/h^2) sin^2(pi k_i / n).
double laplacian_symbol(const PeriodicGrid& g, const std::array<int, 3>& k);

/// Exact solver for (-D-.D+ + c) u = f, one scalar component at a time.
///
/// Holds FFTW plans and scratch buffers, so an instance must not be used
/// by two threads at once; use `SpectralSolver::local` for a per-thread
/// cached instance.
class SpectralSolver {
 public:
  SpectralSolver(const PeriodicGrid& g, Boundary b);
  ~SpectralSolver();
  SpectralSolver(const SpectralSolver&) = delete;
  SpectralSolver& operator=(const SpectralSolver&) = delete;

  const PeriodicGrid& grid() const { return grid_; }
  Boundary boundary() const { return boundary_; }

  /// Periodic with c == 0: the zero mode of the solution is set to 0 and
  /// the mean of `rhs` is ignored. Dirichlet: boundary sites of `out` are 0
  /// and boundary entries of `rhs` are ignored.
  void solve(double c, std::span<const double> rhs, std::span<double> out);

  /// Per-thread instance for (grid, boundary), created on first use.
  static SpectralSolver& local(const PeriodicGrid& g, Boundary b);

 private:
  struct Plans;
  PeriodicGrid grid_;
  Boundary boundary_;
  std::unique_ptr<Plans> plans_;
  std::vector<double> symbol_;  // -D-.D+ eigenvalue per stored mode
};

/// Solves (-D-.D+ + massive_coeff) u = rhs componentwise on the torus.
///
/// With massive_coeff == 0 the rhs must have zero mean per component
/// (|mean| <= 1e-10 ||rhs||_inf, else std::invalid_argument) and the
/// zero-mean solution is returned.
Field solve_shifted_poisson(const Field& rhs, double massive_coeff);

/// Zeroes the sites pinned by a Dirichlet box (any coordinate index 0).
void apply_dirichlet_mask(const PeriodicGrid& g, std::span<double> values, std::size_t ncomp);

/// True when a site lies on the pinned boundary of a Dirichlet box.
bool is_box_boundary(const PeriodicGrid& g, std::size_t site);

}  // namespace homolab
