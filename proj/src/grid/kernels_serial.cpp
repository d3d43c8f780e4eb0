// Reference kernels: straightforward loops over sites with explicit
// wrap-around neighbor lookup. Kept for testing the OpenMP versions.

#include "homolab/kernels.hpp"

namespace homolab::kernels::serial {

void gradient(const PeriodicGrid& g, std::size_t m, std::span<const double> in, std::span<double> out) {
  const std::size_t N = g.sites();
  const int d = g.dim;
  const double inv_h = 1.0 / g.spacing;
  for (std::size_t l = 0; l < m; ++l)
    for (int i = 0; i < d; ++i)
      for (std::size_t x = 0; x < N; ++x)
        out[(l * d + i) * N + x] = (in[l * N + g.shift(x, i, 1)] - in[l * N + x]) * inv_h;
}

void divergence(const PeriodicGrid& g, std::size_t groups, std::span<const double> in, std::span<double> out) {
  const std::size_t N = g.sites();
  const int d = g.dim;
  const double inv_h = 1.0 / g.spacing;
  for (std::size_t l = 0; l < groups; ++l)
    for (std::size_t x = 0; x < N; ++x) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        const std::size_t c = (l * d + j) * N;
        s += in[c + x] - in[c + g.shift(x, j, -1)];
      }
      out[l * N + x] = s * inv_h;
    }
}

void centered(const PeriodicGrid& g, std::size_t ncomp, int axis, std::span<const double> in,
              std::span<double> out) {
  const std::size_t N = g.sites();
  const double f = 0.5 / g.spacing;
  for (std::size_t c = 0; c < ncomp; ++c)
    for (std::size_t x = 0; x < N; ++x)
      out[c * N + x] = (in[c * N + g.shift(x, axis, 1)] - in[c * N + g.shift(x, axis, -1)]) * f;
}

void shifted_laplacian(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> in,
                       std::span<double> out) {
  const std::size_t N = g.sites();
  const double inv_h2 = 1.0 / (g.spacing * g.spacing);
  const double diag = 2.0 * g.dim * inv_h2 + c;
  for (std::size_t k = 0; k < ncomp; ++k)
    for (std::size_t x = 0; x < N; ++x) {
      double s = diag * in[k * N + x];
      for (int i = 0; i < g.dim; ++i)
        s -= (in[k * N + g.shift(x, i, 1)] + in[k * N + g.shift(x, i, -1)]) * inv_h2;
      out[k * N + x] = s;
    }
}

void site_matvec(std::size_t sites, std::size_t na, std::size_t nb, std::span<const double> coef,
                 std::span<const double> in, std::span<double> out) {
  for (std::size_t x = 0; x < sites; ++x) {
    const double* a = coef.data() + x * na * nb;
    for (std::size_t r = 0; r < na; ++r) {
      double s = 0.0;
      for (std::size_t b = 0; b < nb; ++b) s += a[r * nb + b] * in[b * sites + x];
      out[r * sites + x] = s;
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double energy_inner(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> a,
                    std::span<const double> b) {
  const std::size_t N = g.sites();
  const double inv_h2 = 1.0 / (g.spacing * g.spacing);
  double s = 0.0;
  for (std::size_t k = 0; k < ncomp; ++k)
    for (std::size_t x = 0; x < N; ++x) {
      const double ax = a[k * N + x], bx = b[k * N + x];
      double t = c * ax * bx;
      for (int i = 0; i < g.dim; ++i) {
        const std::size_t y = g.shift(x, i, 1);
        t += (a[k * N + y] - ax) * (b[k * N + y] - bx) * inv_h2;
      }
      s += t;
    }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

}  // namespace homolab::kernels::serial
