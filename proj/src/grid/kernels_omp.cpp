// OpenMP kernels. Stencils walk lattice lines so that neighbor offsets are
// a fixed stride except at the wrap; reductions use ordered block sums.

#include <vector>

#include "homolab/kernels.hpp"

namespace homolab::kernels::omp {

namespace {

// Site decomposition along `axis`: site = (outer * n + c) * st + inner.
struct AxisWalk {
  std::size_t n, st, outer;
  AxisWalk(const PeriodicGrid& g, int axis)
      : n(static_cast<std::size_t>(g.n)), st(g.stride(axis)), outer(g.sites() / (g.stride(axis) * g.n)) {}
  std::size_t lines() const { return outer * st; }
  // first site of line `ln` and the step between consecutive sites on it
  std::size_t base(std::size_t ln) const { return (ln / st) * n * st + (ln % st); }
};

template <class F>
double ordered_block_sum(std::size_t count, F&& block_fn) {
  const std::size_t nblocks = (count + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = lo + kReductionBlock < count ? lo + kReductionBlock : count;
    partial[b] = block_fn(lo, hi);
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

}  // namespace

void gradient(const PeriodicGrid& g, std::size_t m, std::span<const double> in, std::span<double> out) {
  const std::size_t N = g.sites();
  const int d = g.dim;
  const double inv_h = 1.0 / g.spacing;
  for (int i = 0; i < d; ++i) {
    const AxisWalk w(g, i);
    for (std::size_t l = 0; l < m; ++l) {
      const double* u = in.data() + l * N;
      double* o = out.data() + (l * d + i) * N;
#pragma omp parallel for schedule(static)
      for (std::size_t ln = 0; ln < w.lines(); ++ln) {
        const std::size_t b = w.base(ln);
        for (std::size_t c = 0; c + 1 < w.n; ++c) {
          const std::size_t x = b + c * w.st;
          o[x] = (u[x + w.st] - u[x]) * inv_h;
        }
        const std::size_t x = b + (w.n - 1) * w.st;
        o[x] = (u[b] - u[x]) * inv_h;
      }
    }
  }
}

void divergence(const PeriodicGrid& g, std::size_t groups, std::span<const double> in, std::span<double> out) {
  const std::size_t N = g.sites();
  const int d = g.dim;
  const double inv_h = 1.0 / g.spacing;
  for (std::size_t l = 0; l < groups; ++l) {
    double* o = out.data() + l * N;
#pragma omp parallel for schedule(static)
    for (std::size_t x = 0; x < N; ++x) o[x] = 0.0;
    for (int j = 0; j < d; ++j) {
      const AxisWalk w(g, j);
      const double* F = in.data() + (l * d + j) * N;
#pragma omp parallel for schedule(static)
      for (std::size_t ln = 0; ln < w.lines(); ++ln) {
        const std::size_t b = w.base(ln);
        o[b] += (F[b] - F[b + (w.n - 1) * w.st]) * inv_h;
        for (std::size_t c = 1; c < w.n; ++c) {
          const std::size_t x = b + c * w.st;
          o[x] += (F[x] - F[x - w.st]) * inv_h;
        }
      }
    }
  }
}

void centered(const PeriodicGrid& g, std::size_t ncomp, int axis, std::span<const double> in,
              std::span<double> out) {
  const std::size_t N = g.sites();
  const double f = 0.5 / g.spacing;
  const AxisWalk w(g, axis);
  for (std::size_t k = 0; k < ncomp; ++k) {
    const double* u = in.data() + k * N;
    double* o = out.data() + k * N;
#pragma omp parallel for schedule(static)
    for (std::size_t ln = 0; ln < w.lines(); ++ln) {
      const std::size_t b = w.base(ln);
      const std::size_t last = b + (w.n - 1) * w.st;
      o[b] = (u[b + w.st] - u[last]) * f;
      for (std::size_t c = 1; c + 1 < w.n; ++c) {
        const std::size_t x = b + c * w.st;
        o[x] = (u[x + w.st] - u[x - w.st]) * f;
      }
      o[last] = (u[b] - u[last - w.st]) * f;
    }
  }
}

void shifted_laplacian(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> in,
                       std::span<double> out) {
  const std::size_t N = g.sites();
  const double inv_h2 = 1.0 / (g.spacing * g.spacing);
  const double diag = 2.0 * g.dim * inv_h2 + c;
  for (std::size_t k = 0; k < ncomp; ++k) {
    const double* u = in.data() + k * N;
    double* o = out.data() + k * N;
#pragma omp parallel for schedule(static)
    for (std::size_t x = 0; x < N; ++x) o[x] = diag * u[x];
    for (int i = 0; i < g.dim; ++i) {
      const AxisWalk w(g, i);
#pragma omp parallel for schedule(static)
      for (std::size_t ln = 0; ln < w.lines(); ++ln) {
        const std::size_t b = w.base(ln);
        const std::size_t last = b + (w.n - 1) * w.st;
        o[b] -= (u[b + w.st] + u[last]) * inv_h2;
        for (std::size_t cc = 1; cc + 1 < w.n; ++cc) {
          const std::size_t x = b + cc * w.st;
          o[x] -= (u[x + w.st] + u[x - w.st]) * inv_h2;
        }
        o[last] -= (u[b] + u[last - w.st]) * inv_h2;
      }
    }
  }
}

void site_matvec(std::size_t sites, std::size_t na, std::size_t nb, std::span<const double> coef,
                 std::span<const double> in, std::span<double> out) {
  const double* A = coef.data();
  const double* v = in.data();
  double* o = out.data();
#pragma omp parallel for schedule(static)
  for (std::size_t x = 0; x < sites; ++x) {
    const double* a = A + x * na * nb;
    for (std::size_t r = 0; r < na; ++r) {
      double s = 0.0;
      for (std::size_t b = 0; b < nb; ++b) s += a[r * nb + b] * v[b * sites + x];
      o[r * sites + x] = s;
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  return ordered_block_sum(a.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    return s;
  });
}

double energy_inner(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> a,
                    std::span<const double> b) {
  const std::size_t N = g.sites();
  const double inv_h2 = 1.0 / (g.spacing * g.spacing);
  double total = 0.0;
  for (std::size_t k = 0; k < ncomp; ++k) {
    const double* u = a.data() + k * N;
    const double* v = b.data() + k * N;
    total += ordered_block_sum(N, [&](std::size_t lo, std::size_t hi) {
      double s = 0.0;
      for (std::size_t x = lo; x < hi; ++x) {
        double t = c * u[x] * v[x];
        for (int i = 0; i < g.dim; ++i) {
          const std::size_t y = g.shift(x, i, 1);
          t += (u[y] - u[x]) * (v[y] - v[x]) * inv_h2;
        }
        s += t;
      }
      return s;
    });
  }
  return total;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const double* xs = x.data();
  double* ys = y.data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

void scale(double alpha, std::span<double> x) {
  const std::size_t n = x.size();
  double* xs = x.data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) xs[i] *= alpha;
}

}  // namespace homolab::kernels::omp
