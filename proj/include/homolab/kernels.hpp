#pragma once

// Site-parallel lattice kernels.
//
// Every kernel exists twice with an identical signature: `serial` is the
// plain reference loop kept for testing, `omp` is the OpenMP version used
// at runtime. Reductions in `omp` sum fixed-size blocks and then combine
// the block sums in order, so results do not depend on the thread count.
// Array arguments are component-major blocks of `grid.sites()` values.

#include <cstddef>
#include <span>

#include "homolab/grid.hpp"

namespace homolab::kernels {

inline constexpr std::size_t kReductionBlock = 2048;

namespace serial {

// out[l*d + i] = D+_i in[l], l < m
void gradient(const PeriodicGrid& g, std::size_t m, std::span<const double> in, std::span<double> out);
// out[l] = sum_i D-_i in[l*d + i], l < groups
void divergence(const PeriodicGrid& g, std::size_t groups, std::span<const double> in, std::span<double> out);
void centered(const PeriodicGrid& g, std::size_t ncomp, int axis, std::span<const double> in, std::span<double> out);
// out = (-D-.D+ + c) in, componentwise
void shifted_laplacian(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> in,
                       std::span<double> out);
// out_a(x) = sum_b coef(x)[a*nb + b] in_b(x); coef is site-major with na*nb entries per site
void site_matvec(std::size_t sites, std::size_t na, std::size_t nb, std::span<const double> coef,
                 std::span<const double> in, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
// sum_x sum_l [ sum_i D+_i a_l D+_i b_l + c a_l b_l ]
double energy_inner(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> a,
                    std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);

}  // namespace serial

namespace omp {

void gradient(const PeriodicGrid& g, std::size_t m, std::span<const double> in, std::span<double> out);
void divergence(const PeriodicGrid& g, std::size_t groups, std::span<const double> in, std::span<double> out);
void centered(const PeriodicGrid& g, std::size_t ncomp, int axis, std::span<const double> in, std::span<double> out);
void shifted_laplacian(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> in,
                       std::span<double> out);
void site_matvec(std::size_t sites, std::size_t na, std::size_t nb, std::span<const double> coef,
                 std::span<const double> in, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
double energy_inner(const PeriodicGrid& g, std::size_t ncomp, double c, std::span<const double> a,
                    std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);

}  // namespace omp

// Runtime entry points.
using omp::axpy;
using omp::centered;
using omp::divergence;
using omp::dot;
using omp::energy_inner;
using omp::gradient;
using omp::scale;
using omp::shifted_laplacian;
using omp::site_matvec;

}  // namespace homolab::kernels
