#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace homolab {

/// Uniform lattice on the torus [0, L)^d with n points per side.
///
/// Sites are ordered row-major: the last axis varies fastest. Index
/// arithmetic wraps modulo n on every axis; there are no ghost cells.
struct PeriodicGrid {
  int dim = 1;
  int n = 4;
  double length = 1.0;
  double spacing = 0.25;

  std::size_t sites() const;
  /// h^d, the quadrature weight of one site.
  double cell_volume() const;
  std::array<int, 3> coords(std::size_t site) const;
  std::size_t index(const std::array<int, 3>& c) const;
  /// Neighbor of `site` displaced by `step` lattice units along `axis`.
  std::size_t shift(std::size_t site, int axis, int step) const;
  /// Stride of one step along `axis` in the row-major ordering.
  std::size_t stride(int axis) const;
  /// Physical coordinate of a site, x_i = i h.
  std::array<double, 3> position(std::size_t site) const;

  bool operator==(const PeriodicGrid&) const = default;
};

/// Validates and constructs a grid. Throws std::invalid_argument when
/// d is not in {1,2,3}, n is not a power of two >= 4, or L <= 0.
PeriodicGrid build_grid(int d, int n, double L);

bool is_power_of_two(long long v);

/// Tensor shape of the per-site value: {} scalar, {m}, {m,d}, {m,d,d}.
using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Lattice-sampled tensor field.
///
/// Storage is component-major: component c occupies the contiguous block
/// [c * sites, (c+1) * sites), each block row-major over lattice sites.
/// For an {m,d} field, component (l, j) is c = l*d + j; for {m,d,d},
/// (l, j, k) is c = (l*d + j)*d + k.
class Field {
 public:
  Field() = default;
  Field(const PeriodicGrid& grid, Shape shape);
  Field(const PeriodicGrid& grid, Shape shape, std::vector<double> values);

  const PeriodicGrid& grid() const { return grid_; }
  const Shape& shape() const { return shape_; }
  std::size_t components() const { return components_; }
  std::size_t sites() const { return grid_.sites(); }

  std::span<double> component(std::size_t c);
  std::span<const double> component(std::size_t c) const;
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator()(std::size_t c, std::size_t site) { return values_[c * grid_.sites() + site]; }
  double operator()(std::size_t c, std::size_t site) const { return values_[c * grid_.sites() + site]; }

  bool all_finite() const;
  /// Site mean of component c (unweighted).
  double mean(std::size_t c) const;
  /// Continuum-scaled L^2 norm over all components: sqrt(h^d sum |v|^2).
  double l2_norm() const;
  /// Maximum absolute entry.
  double max_abs() const;

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double s);

 private:
  PeriodicGrid grid_{};
  Shape shape_{};
  std::size_t components_ = 0;
  std::vector<double> values_;
};

Field operator-(Field a, const Field& b);
Field operator+(Field a, const Field& b);

/// Forward-difference gradient (D+u)_{l,i}(x) = (u_l(x + h e_i) - u_l(x)) / h.
/// Input shape {m} (or scalar), output shape {m, d}.
Field apply_gradient(const Field& u);

/// Backward-difference divergence over the last tensor index,
/// (D-.F)_{..}(x) = sum_j (F_{..j}(x) - F_{..j}(x - h e_j)) / h.
/// Input shape {..., d}, output shape {...}. This is minus the adjoint
/// of apply_gradient.
Field apply_divergence(const Field& F);

/// Centered difference (u(x + h e_i) - u(x - h e_i)) / (2h) of every
/// component along one axis.
Field apply_centered(const Field& u, int axis);

/// Translate every component by `step` sites along `axis`: out(x) = in(x - step h e_axis).
Field translate(const Field& u, int axis, int step);

/// Unweighted Euclidean inner product of the value arrays.
double inner(const Field& a, const Field& b);

}  // namespace homolab
