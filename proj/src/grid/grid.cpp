#include "homolab/grid.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "homolab/kernels.hpp"

namespace homolab {

bool is_power_of_two(long long v) { return v > 0 && (v & (v - 1)) == 0; }

PeriodicGrid build_grid(int d, int n, double L) {
  if (d < 1 || d > 3) throw std::invalid_argument("grid: dimension must be 1, 2 or 3");
  if (n < 4 || !is_power_of_two(n)) throw std::invalid_argument("grid: n must be a power of two >= 4");
  if (!(L > 0.0) || !std::isfinite(L)) throw std::invalid_argument("grid: period L must be positive");
  PeriodicGrid g;
  g.dim = d;
  g.n = n;
  g.length = L;
  g.spacing = L / n;
  return g;
}

std::size_t PeriodicGrid::sites() const {
  std::size_t s = 1;
  for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(n);
  return s;
}

double PeriodicGrid::cell_volume() const { return std::pow(spacing, dim); }

std::size_t PeriodicGrid::stride(int axis) const {
  std::size_t s = 1;
  for (int i = axis + 1; i < dim; ++i) s *= static_cast<std::size_t>(n);
  return s;
}

std::array<int, 3> PeriodicGrid::coords(std::size_t site) const {
  std::array<int, 3> c{0, 0, 0};
  for (int i = dim - 1; i >= 0; --i) {
    c[i] = static_cast<int>(site % n);
    site /= n;
  }
  return c;
}

std::size_t PeriodicGrid::index(const std::array<int, 3>& c) const {
  std::size_t s = 0;
  for (int i = 0; i < dim; ++i) {
    int ci = c[i] % n;
    if (ci < 0) ci += n;
    s = s * n + static_cast<std::size_t>(ci);
  }
  return s;
}

std::size_t PeriodicGrid::shift(std::size_t site, int axis, int step) const {
  const std::size_t st = stride(axis);
  const long long ci = static_cast<long long>((site / st) % n);
  long long cj = (ci + step) % n;
  if (cj < 0) cj += n;
  return site + static_cast<std::size_t>((cj - ci) * static_cast<long long>(st));
}

std::array<double, 3> PeriodicGrid::position(std::size_t site) const {
  const auto c = coords(site);
  return {c[0] * spacing, c[1] * spacing, c[2] * spacing};
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "}";
  return os.str();
}

Field::Field(const PeriodicGrid& grid, Shape shape)
    : grid_(grid), shape_(std::move(shape)), components_(shape_size(shape_)),
      values_(components_ * grid.sites(), 0.0) {}

Field::Field(const PeriodicGrid& grid, Shape shape, std::vector<double> values)
    : grid_(grid), shape_(std::move(shape)), components_(shape_size(shape_)), values_(std::move(values)) {
  if (values_.size() != components_ * grid_.sites())
    throw std::invalid_argument("field: value count does not match grid and shape " + shape_string(shape_));
}

std::span<double> Field::component(std::size_t c) {
  return std::span<double>(values_).subspan(c * sites(), sites());
}

std::span<const double> Field::component(std::size_t c) const {
  return std::span<const double>(values_).subspan(c * sites(), sites());
}

bool Field::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Field::mean(std::size_t c) const {
  const auto comp = component(c);
  double s = 0.0;
  for (double v : comp) s += v;
  return s / static_cast<double>(comp.size());
}

double Field::l2_norm() const {
  return std::sqrt(grid_.cell_volume() * kernels::dot(values_, values_));
}

double Field::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

namespace {
void check_same(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid()) || a.shape() != b.shape())
    throw std::invalid_argument("field: grid or shape mismatch");
}
}  // namespace

Field& Field::operator+=(const Field& other) {
  check_same(*this, other);
  kernels::axpy(1.0, other.values(), values_);
  return *this;
}

Field& Field::operator-=(const Field& other) {
  check_same(*this, other);
  kernels::axpy(-1.0, other.values(), values_);
  return *this;
}

Field& Field::operator*=(double s) {
  kernels::scale(s, values_);
  return *this;
}

Field operator-(Field a, const Field& b) { return a -= b; }
Field operator+(Field a, const Field& b) { return a += b; }

Field apply_gradient(const Field& u) {
  const auto& g = u.grid();
  Shape out_shape = u.shape();
  out_shape.push_back(g.dim);
  Field out(g, out_shape);
  kernels::gradient(g, u.components(), u.values(), out.values());
  return out;
}

Field apply_divergence(const Field& F) {
  const auto& g = F.grid();
  if (F.shape().empty() || F.shape().back() != g.dim)
    throw std::invalid_argument("divergence: last tensor index must have extent d, got " +
                                shape_string(F.shape()));
  Shape out_shape(F.shape().begin(), F.shape().end() - 1);
  Field out(g, out_shape);
  kernels::divergence(g, out.components(), F.values(), out.values());
  return out;
}

Field apply_centered(const Field& u, int axis) {
  if (axis < 0 || axis >= u.grid().dim) throw std::invalid_argument("centered: axis out of range");
  Field out(u.grid(), u.shape());
  kernels::centered(u.grid(), u.components(), axis, u.values(), out.values());
  return out;
}

Field translate(const Field& u, int axis, int step) {
  const auto& g = u.grid();
  Field out(g, u.shape());
  const std::size_t N = g.sites();
  for (std::size_t c = 0; c < u.components(); ++c)
    for (std::size_t x = 0; x < N; ++x) out(c, g.shift(x, axis, step)) = u(c, x);
  return out;
}

double inner(const Field& a, const Field& b) {
  check_same(a, b);
  return kernels::dot(a.values(), b.values());
}

}  // namespace homolab
