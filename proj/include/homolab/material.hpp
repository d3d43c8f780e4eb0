#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace homolab {

struct FamilyFlags {
  bool has_second_derivative = false;
  bool uhlenbeck = false;
  bool frame_indifferent = false;
};

/// Monotone material law A(omega, xi) with omega in the unit ball of R^k and
/// xi in R^{m x d}.
///
/// Matrices are flattened row-major: xi[l*d + j]. Jacobians are square
/// (md x md) row-major, jac[a*md + b] = dA_a / dxi_b. The parameter
/// derivative is (md x k), out[a*k + c] = dA_a / domega_c.
class OperatorFamily {
 public:
  OperatorFamily(int m, int d, int k, double lambda, double Lambda, FamilyFlags flags, std::string name);
  virtual ~OperatorFamily() = default;

  int m() const { return m_; }
  int d() const { return d_; }
  int k() const { return k_; }
  int size() const { return m_ * d_; }
  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  const FamilyFlags& flags() const { return flags_; }
  const std::string& name() const { return name_; }

  virtual void eval(const double* omega, const double* xi, double* out) const = 0;
  virtual void d_xi(const double* omega, const double* xi, double* jac) const = 0;
  virtual void d_omega(const double* omega, const double* xi, double* out) const = 0;
  /// d_omega_c d_xi A as k blocks of md x md. Default: central differences
  /// of d_xi in omega.
  virtual void d_omega_xi(const double* omega, const double* xi, double* out) const;

  /// Same family with the spatial dimension replaced (laws are built per d).
  virtual std::shared_ptr<const OperatorFamily> with_dim(int d) const = 0;

 private:
  int m_, d_, k_;
  double lambda_, Lambda_;
  FamilyFlags flags_;
  std::string name_;
};

using FamilyPtr = std::shared_ptr<const OperatorFamily>;

/// Matrix-valued coefficient for linear laws: a(omega) (md x md) and its
/// derivative in omega (k blocks of md x md).
struct LinearCoefficient {
  std::function<void(const double* omega, double* a)> a;
  std::function<void(const double* omega, double* da)> da;
  std::string name = "custom";
};

/// A(omega, xi) = a(omega) xi. Audits eigenvalues of the symmetric part and
/// the operator norm of a(omega) on a sweep of omega; throws
/// std::invalid_argument when they leave [lambda, Lambda].
FamilyPtr make_linear(int m, int d, int k, LinearCoefficient coef, double lambda, double Lambda);

/// a(omega) = ((3 + omega_0)/2) Id: lambda = 1, Lambda = 2.
FamilyPtr make_linear_midpoint(int m, int d);
/// a(omega) = exp(kappa omega_0) Id: lambda = e^-kappa, Lambda = e^kappa; kappa <= 1.
FamilyPtr make_linear_exp(int m, int d, double kappa);
/// Constant a = c Id (k = 1, omega ignored).
FamilyPtr make_linear_constant(int m, int d, double c);

/// w A1(xi) + (1 - w) A2(xi), w = (omega_0 + 1)/2, with A1, A2 evaluated at
/// omega = 0.
FamilyPtr make_convex_mixture(FamilyPtr A1, FamilyPtr A2);

/// A(omega, xi) = rho xi, rho = (1 + s)/(1 + (1 + w) s), s = |xi|^2,
/// w = (omega_0 + 1)/2. lambda = 7/16 (minimum radial slope at w = 1,
/// attained at s = 3/2), Lambda = 1.
FamilyPtr make_rational_uhlenbeck(int m, int d);

/// Builds a family from a config string:
///   "rational_uhlenbeck", "linear:midpoint", "linear:exp", "linear:const",
///   "convex_mixture:<a>,<b>" with <a>, <b> in {lin<c>, rational_uhlenbeck}.
/// `params` may hold {"kappa": .., "c": ..}.
FamilyPtr make_family(const std::string& spec, int m, int d, const nlohmann::json& params = {});

struct ValidationReport {
  int probes = 0;
  double observed_lambda = 0.0;  // min secant monotonicity ratio
  double observed_Lambda = 0.0;  // max secant Lipschitz ratio
  double max_zero_value = 0.0;   // max |A(omega, 0)|
  double domega_ratio = 0.0;     // max |d_omega A| / |xi|
  double domega_xi_norm = 0.0;   // max |d_omega d_xi A|
  double dxi_fd_error = 0.0;     // max relative analytic vs central-FD mismatch
  double domega_fd_error = 0.0;
  bool pass_A1 = false, pass_A2 = false, pass_A3 = false, pass_derivatives = false;

  bool all_pass() const { return pass_A1 && pass_A2 && pass_A3 && pass_derivatives; }
  nlohmann::json to_json() const;
};

/// Sampled audit of the structural assumptions: xi uniform in |xi| <= 10,
/// omega uniform in the unit ball. Tolerance 1e-6 relative.
/// Throws std::invalid_argument for n_probe < 100.
ValidationReport validate_assumptions(const OperatorFamily& fam, int n_probe, std::uint64_t seed,
                                      double xi_radius = 10.0);

/// Max relative mismatch |J_fd - J| / (1 + |J|) of the central-difference
/// Jacobian with the given step at one point.
double dxi_fd_mismatch(const OperatorFamily& fam, const double* omega, const double* xi, double step);

}  // namespace homolab
