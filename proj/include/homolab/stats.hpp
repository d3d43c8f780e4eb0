#pragma once

#include <span>
#include <utility>
#include <vector>

namespace homolab {

/// Ordinary least squares of log y against log x.
struct RateFit {
  std::vector<std::pair<double, double>> pairs;  // (log x, log y)
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
  int n_points = 0;

  /// slope +- z * slope_se
  std::pair<double, double> interval(double z = 1.96) const { return {slope - z * slope_se, slope + z * slope_se}; }
};

/// Throws std::invalid_argument for fewer than 3 pairs or non-positive values.
RateFit fit_rate(std::span<const double> x, std::span<const double> y);

/// Plain OLS y = a + b x, same diagnostics, no log transform.
RateFit fit_line(std::span<const double> x, std::span<const double> y);

struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;       // unbiased
  double se = 0.0;       // sd / sqrt(n)
  double sd_se = 0.0;    // normal-theory sd / sqrt(2(n-1))
  int n = 0;
};

SampleSummary summarize(std::span<const double> v);

/// Gauss-Hermite rule for the standard normal: sum w_i f(x_i) ~ E f(Y).
struct Quadrature {
  std::vector<double> nodes, weights;
};
Quadrature gauss_hermite_normal(int n);

}  // namespace homolab
