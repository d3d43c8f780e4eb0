#include "homolab/stats.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace homolab {

RateFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit: x and y differ in length");
  if (x.size() < 3) throw std::invalid_argument("fit: need at least 3 points, got " + std::to_string(x.size()));
  RateFit f;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.pairs.emplace_back(x[i], y[i]);
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("fit: x values are all equal");
  f.n_points = static_cast<int>(x.size());
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, syy - f.slope * sxy);
  f.slope_se = std::sqrt(sse / (n - 2) / sxx);
  f.r_squared = syy > 0 ? 1.0 - sse / syy : 1.0;
  return f;
}

RateFit fit_rate(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit: x and y differ in length");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw std::invalid_argument("fit: values must be positive for a log-log fit");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

SampleSummary summarize(std::span<const double> v) {
  SampleSummary s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(s.n));
    s.sd_se = s.sd / std::sqrt(2.0 * (s.n - 1));
  }
  return s;
}

Quadrature gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("quadrature: n >= 1");
  // Golub-Welsch for the probabilists' Hermite weight: Jacobi matrix with off-diagonal sqrt(i)
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (int i = 0; i < n; ++i) {
    q.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    q.weights.push_back(v0 * v0);
  }
  return q;
}

}  // namespace homolab
