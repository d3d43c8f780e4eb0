#include "homolab/material.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "homolab/randomfield.hpp"

namespace homolab {

OperatorFamily::OperatorFamily(int m, int d, int k, double lambda, double Lambda, FamilyFlags flags,
                               std::string name)
    : m_(m), d_(d), k_(k), lambda_(lambda), Lambda_(Lambda), flags_(flags), name_(std::move(name)) {
  if (m < 1 || d < 1 || d > 3 || k < 1) throw std::invalid_argument("operator family: bad (m, d, k)");
  if (!(lambda > 0.0) || !(Lambda >= lambda)) throw std::invalid_argument("operator family: need 0 < lambda <= Lambda");
}

void OperatorFamily::d_omega_xi(const double* omega, const double* xi, double* out) const {
  const int n = size(), k = k_;
  std::vector<double> w(omega, omega + k), jp(n * n), jm(n * n);
  for (int c = 0; c < k; ++c) {
    const double h = 1e-5;
    const double w0 = w[c];
    w[c] = w0 + h;
    d_xi(w.data(), xi, jp.data());
    w[c] = w0 - h;
    d_xi(w.data(), xi, jm.data());
    w[c] = w0;
    for (int i = 0; i < n * n; ++i) out[c * n * n + i] = (jp[i] - jm[i]) / (2 * h);
  }
}

namespace {

double norm2(const double* v, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return s;
}

// a(omega) = f(omega_0) Id with a scalar profile f.
class IsotropicLinear final : public OperatorFamily {
 public:
  IsotropicLinear(int m, int d, std::string kind, double param)
      : OperatorFamily(m, d, 1, lower(kind, param), upper(kind, param),
                       FamilyFlags{true, true, true}, "linear:" + kind),
        kind_(std::move(kind)), param_(param) {}

  void eval(const double* omega, const double* xi, double* out) const override {
    const double a = f(omega[0]);
    for (int i = 0; i < size(); ++i) out[i] = a * xi[i];
  }
  void d_xi(const double* omega, const double*, double* jac) const override {
    const int n = size();
    std::fill(jac, jac + n * n, 0.0);
    const double a = f(omega[0]);
    for (int i = 0; i < n; ++i) jac[i * n + i] = a;
  }
  void d_omega(const double* omega, const double* xi, double* out) const override {
    const double da = df(omega[0]);
    for (int i = 0; i < size(); ++i) out[i] = da * xi[i];
  }
  void d_omega_xi(const double* omega, const double*, double* out) const override {
    const int n = size();
    std::fill(out, out + n * n, 0.0);
    const double da = df(omega[0]);
    for (int i = 0; i < n; ++i) out[i * n + i] = da;
  }
  FamilyPtr with_dim(int d) const override { return std::make_shared<IsotropicLinear>(m(), d, kind_, param_); }

  double f(double w) const { return value(kind_, param_, w); }
  double df(double w) const {
    if (kind_ == "midpoint") return 0.5;
    if (kind_ == "exp") return param_ * std::exp(param_ * w);
    return 0.0;
  }

 private:
  static double value(const std::string& kind, double p, double w) {
    if (kind == "midpoint") return (3.0 + w) / 2.0;
    if (kind == "exp") return std::exp(p * w);
    if (kind == "const") return p;
    throw std::invalid_argument("unknown linear profile '" + kind + "'");
  }
  static double lower(const std::string& kind, double p) { return std::min(value(kind, p, -1.0), value(kind, p, 1.0)); }
  static double upper(const std::string& kind, double p) {
    double u = std::max(value(kind, p, -1.0), value(kind, p, 1.0));
    if (kind == "exp") u = std::max(u, std::abs(p) * u);  // keep |d_omega A| <= Lambda |xi|
    return u;
  }
  std::string kind_;
  double param_;
};

class MatrixLinear final : public OperatorFamily {
 public:
  MatrixLinear(int m, int d, int k, LinearCoefficient c, double lambda, double Lambda)
      : OperatorFamily(m, d, k, lambda, Lambda, FamilyFlags{static_cast<bool>(c.da), false, false},
                       "linear:" + c.name),
        c_(std::move(c)) {}

  void eval(const double* omega, const double* xi, double* out) const override {
    const int n = size();
    std::vector<double> a(n * n);
    c_.a(omega, a.data());
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a[i * n + j] * xi[j];
      out[i] = s;
    }
  }
  void d_xi(const double* omega, const double*, double* jac) const override { c_.a(omega, jac); }
  void d_omega(const double* omega, const double* xi, double* out) const override {
    const int n = size(), kk = k();
    std::vector<double> da(kk * n * n);
    if (c_.da) {
      c_.da(omega, da.data());
    } else {
      OperatorFamily::d_omega_xi(omega, xi, da.data());
    }
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < kk; ++c) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += da[c * n * n + i * n + j] * xi[j];
        out[i * kk + c] = s;
      }
  }
  void d_omega_xi(const double* omega, const double* xi, double* out) const override {
    if (c_.da)
      c_.da(omega, out);
    else
      OperatorFamily::d_omega_xi(omega, xi, out);
  }
  FamilyPtr with_dim(int dd) const override {
    if (dd == d()) return std::make_shared<MatrixLinear>(*this);
    throw std::invalid_argument("linear family with custom coefficient cannot change dimension");
  }

 private:
  LinearCoefficient c_;
};

class ConvexMixture final : public OperatorFamily {
 public:
  ConvexMixture(FamilyPtr a1, FamilyPtr a2)
      : OperatorFamily(a1->m(), a1->d(), 1, std::min(a1->lambda(), a2->lambda()),
                       std::max(a1->Lambda(), a2->Lambda()),
                       FamilyFlags{true, a1->flags().uhlenbeck && a2->flags().uhlenbeck,
                                   a1->flags().frame_indifferent && a2->flags().frame_indifferent},
                       "convex_mixture:" + a1->name() + "," + a2->name()),
        a1_(std::move(a1)), a2_(std::move(a2)), zero1_(a1_->k(), 0.0), zero2_(a2_->k(), 0.0) {}

  void eval(const double* omega, const double* xi, double* out) const override {
    const int n = size();
    std::vector<double> b(n);
    const double w = 0.5 * (omega[0] + 1.0);
    a1_->eval(zero1_.data(), xi, out);
    a2_->eval(zero2_.data(), xi, b.data());
    for (int i = 0; i < n; ++i) out[i] = w * out[i] + (1 - w) * b[i];
  }
  void d_xi(const double* omega, const double* xi, double* jac) const override {
    const int n = size();
    std::vector<double> b(n * n);
    const double w = 0.5 * (omega[0] + 1.0);
    a1_->d_xi(zero1_.data(), xi, jac);
    a2_->d_xi(zero2_.data(), xi, b.data());
    for (int i = 0; i < n * n; ++i) jac[i] = w * jac[i] + (1 - w) * b[i];
  }
  void d_omega(const double*, const double* xi, double* out) const override {
    const int n = size();
    std::vector<double> b(n);
    a1_->eval(zero1_.data(), xi, out);
    a2_->eval(zero2_.data(), xi, b.data());
    for (int i = 0; i < n; ++i) out[i] = 0.5 * (out[i] - b[i]);
  }
  void d_omega_xi(const double*, const double* xi, double* out) const override {
    const int n = size();
    std::vector<double> b(n * n);
    a1_->d_xi(zero1_.data(), xi, out);
    a2_->d_xi(zero2_.data(), xi, b.data());
    for (int i = 0; i < n * n; ++i) out[i] = 0.5 * (out[i] - b[i]);
  }
  FamilyPtr with_dim(int d) const override {
    return std::make_shared<ConvexMixture>(a1_->with_dim(d), a2_->with_dim(d));
  }

 private:
  FamilyPtr a1_, a2_;
  std::vector<double> zero1_, zero2_;
};

class RationalUhlenbeck final : public OperatorFamily {
 public:
  RationalUhlenbeck(int m, int d)
      : OperatorFamily(m, d, 1, 7.0 / 16.0, 1.0, FamilyFlags{true, true, true}, "rational_uhlenbeck") {}

  struct Coeffs {
    double rho, rho_s, rho_w, rho_sw;
  };
  static Coeffs coeffs(double omega0, double s) {
    const double w = 0.5 * (omega0 + 1.0);
    const double D = 1.0 + (1.0 + w) * s;
    return {(1.0 + s) / D, -w / (D * D), -(1.0 + s) * s / (D * D), -1.0 / (D * D) + 2.0 * w * s / (D * D * D)};
  }

  void eval(const double* omega, const double* xi, double* out) const override {
    const auto c = coeffs(omega[0], norm2(xi, size()));
    for (int i = 0; i < size(); ++i) out[i] = c.rho * xi[i];
  }
  void d_xi(const double* omega, const double* xi, double* jac) const override {
    const int n = size();
    const auto c = coeffs(omega[0], norm2(xi, n));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) jac[a * n + b] = (a == b ? c.rho : 0.0) + 2.0 * c.rho_s * xi[a] * xi[b];
  }
  void d_omega(const double* omega, const double* xi, double* out) const override {
    const auto c = coeffs(omega[0], norm2(xi, size()));
    for (int i = 0; i < size(); ++i) out[i] = 0.5 * c.rho_w * xi[i];
  }
  void d_omega_xi(const double* omega, const double* xi, double* out) const override {
    const int n = size();
    const auto c = coeffs(omega[0], norm2(xi, n));
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) out[a * n + b] = 0.5 * ((a == b ? c.rho_w : 0.0) + 2.0 * c.rho_sw * xi[a] * xi[b]);
  }
  FamilyPtr with_dim(int d) const override { return std::make_shared<RationalUhlenbeck>(m(), d); }
};

double op_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

void sample_ball(std::mt19937_64& rng, double radius, int n, double* out) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double r2 = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = N(rng);
    r2 += out[i] * out[i];
  }
  const double r = radius * std::pow(U(rng), 1.0 / n) / std::sqrt(r2);
  for (int i = 0; i < n; ++i) out[i] *= r;
}

}  // namespace

FamilyPtr make_linear(int m, int d, int k, LinearCoefficient coef, double lambda, double Lambda) {
  if (!coef.a) throw std::invalid_argument("make_linear: coefficient callable missing");
  auto fam = std::make_shared<MatrixLinear>(m, d, k, coef, lambda, Lambda);
  const int n = m * d;
  std::vector<std::vector<double>> omegas;
  if (k == 1) {
    for (int i = 0; i <= 200; ++i) omegas.push_back({-kBallRadius + 2.0 * kBallRadius * i / 200.0});
  } else {
    std::mt19937_64 rng(0x5eed);
    for (int i = 0; i < 500; ++i) {
      std::vector<double> w(k);
      sample_ball(rng, kBallRadius, k, w.data());
      omegas.push_back(w);
    }
  }
  std::vector<double> a(n * n);
  for (const auto& w : omegas) {
    coef.a(w.data(), a.data());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(a.data(), n, n);
    const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = op_norm(A);
    if (lo < lambda * (1 - 1e-9) || hi > Lambda * (1 + 1e-9))
      throw std::invalid_argument("make_linear: eigenvalue range violated at omega_0 = " + std::to_string(w[0]) +
                                  " (min " + std::to_string(lo) + ", norm " + std::to_string(hi) + ")");
  }
  return fam;
}

FamilyPtr make_linear_midpoint(int m, int d) { return std::make_shared<IsotropicLinear>(m, d, "midpoint", 0.0); }

FamilyPtr make_linear_exp(int m, int d, double kappa) {
  if (!(kappa > 0.0) || kappa > 1.0) throw std::invalid_argument("linear:exp requires 0 < kappa <= 1");
  return std::make_shared<IsotropicLinear>(m, d, "exp", kappa);
}

FamilyPtr make_linear_constant(int m, int d, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("linear:const requires c > 0");
  return std::make_shared<IsotropicLinear>(m, d, "const", c);
}

FamilyPtr make_convex_mixture(FamilyPtr A1, FamilyPtr A2) {
  if (!A1 || !A2) throw std::invalid_argument("convex mixture: null component");
  if (A1->m() != A2->m() || A1->d() != A2->d()) throw std::invalid_argument("convex mixture: shape mismatch");
  return std::make_shared<ConvexMixture>(std::move(A1), std::move(A2));
}

FamilyPtr make_rational_uhlenbeck(int m, int d) { return std::make_shared<RationalUhlenbeck>(m, d); }

namespace {
FamilyPtr make_base(const std::string& s, int m, int d) {
  if (s == "rational_uhlenbeck") return make_rational_uhlenbeck(m, d);
  if (s.rfind("lin", 0) == 0 && s.size() > 3) {
    try {
      return make_linear_constant(m, d, std::stod(s.substr(3)));
    } catch (const std::logic_error&) {
    }
  }
  throw std::invalid_argument("unknown mixture component '" + s + "'");
}
}  // namespace

FamilyPtr make_family(const std::string& spec, int m, int d, const nlohmann::json& params) {
  if (spec == "rational_uhlenbeck") return make_rational_uhlenbeck(m, d);
  if (spec == "linear:midpoint") return make_linear_midpoint(m, d);
  if (spec == "linear:exp") return make_linear_exp(m, d, params.value("kappa", 0.5));
  if (spec == "linear:const") return make_linear_constant(m, d, params.value("c", 1.0));
  const std::string mix = "convex_mixture:";
  if (spec.rfind(mix, 0) == 0) {
    const auto rest = spec.substr(mix.size());
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("convex_mixture needs two components: '" + spec + "'");
    return make_convex_mixture(make_base(rest.substr(0, comma), m, d), make_base(rest.substr(comma + 1), m, d));
  }
  throw std::invalid_argument("unknown family '" + spec + "'");
}

double dxi_fd_mismatch(const OperatorFamily& fam, const double* omega, const double* xi, double step) {
  const int n = fam.size();
  std::vector<double> J(n * n), xp(xi, xi + n), ap(n), am(n);
  fam.d_xi(omega, xi, J.data());
  double err = 0.0, jn = 0.0;
  for (double v : J) jn = std::max(jn, std::abs(v));
  for (int b = 0; b < n; ++b) {
    xp[b] = xi[b] + step;
    fam.eval(omega, xp.data(), ap.data());
    xp[b] = xi[b] - step;
    fam.eval(omega, xp.data(), am.data());
    xp[b] = xi[b];
    for (int a = 0; a < n; ++a) err = std::max(err, std::abs((ap[a] - am[a]) / (2 * step) - J[a * n + b]));
  }
  return err / (1.0 + jn);
}

nlohmann::json ValidationReport::to_json() const {
  return {{"probes", probes},
          {"observed_lambda", observed_lambda},
          {"observed_Lambda", observed_Lambda},
          {"max_zero_value", max_zero_value},
          {"domega_ratio", domega_ratio},
          {"domega_xi_norm", domega_xi_norm},
          {"dxi_fd_error", dxi_fd_error},
          {"domega_fd_error", domega_fd_error},
          {"pass", {{"A1", pass_A1}, {"A2", pass_A2}, {"A3", pass_A3}, {"derivatives", pass_derivatives}}}};
}

ValidationReport validate_assumptions(const OperatorFamily& fam, int n_probe, std::uint64_t seed, double xi_radius) {
  if (n_probe < 100) throw std::invalid_argument("validate_assumptions: n_probe must be >= 100");
  const int n = fam.size(), k = fam.k();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> w(k), x1(n), x2(n), a1(n), a2(n), J(n * n), dW(n * k), dWX(k * n * n), tmp(n), tmp2(n);
  std::vector<double> zero(n, 0.0);
  ValidationReport r;
  r.probes = n_probe;
  r.observed_lambda = INFINITY;
  for (int p = 0; p < n_probe; ++p) {
    sample_ball(rng, kBallRadius, k, w.data());
    sample_ball(rng, xi_radius, n, x1.data());
    if (p % 2 == 0) {
      sample_ball(rng, xi_radius, n, x2.data());
    } else {  // nearby pair: probes the local slope
      sample_ball(rng, 1e-3 * xi_radius * U(rng), n, x2.data());
      for (int i = 0; i < n; ++i) x2[i] += x1[i];
    }
    fam.eval(w.data(), x1.data(), a1.data());
    fam.eval(w.data(), x2.data(), a2.data());
    double dd = 0, da2 = 0, dot = 0;
    for (int i = 0; i < n; ++i) {
      const double dx = x2[i] - x1[i], dA = a2[i] - a1[i];
      dd += dx * dx;
      da2 += dA * dA;
      dot += dA * dx;
    }
    if (dd > 0) {
      r.observed_lambda = std::min(r.observed_lambda, dot / dd);
      r.observed_Lambda = std::max(r.observed_Lambda, std::sqrt(da2 / dd));
    }
    fam.eval(w.data(), zero.data(), tmp.data());
    r.max_zero_value = std::max(r.max_zero_value, std::sqrt(norm2(tmp.data(), n)));

    const double xn = std::sqrt(norm2(x1.data(), n));
    fam.d_omega(w.data(), x1.data(), dW.data());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> DW(dW.data(), n, k);
    if (xn > 0) r.domega_ratio = std::max(r.domega_ratio, op_norm(DW) / xn);
    fam.d_omega_xi(w.data(), x1.data(), dWX.data());
    for (int c = 0; c < k; ++c) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(dWX.data() + c * n * n,
                                                                                                  n, n);
      r.domega_xi_norm = std::max(r.domega_xi_norm, op_norm(M));
    }

    const double step = 1e-5 * (1.0 + xn);
    r.dxi_fd_error = std::max(r.dxi_fd_error, dxi_fd_mismatch(fam, w.data(), x1.data(), step));
    // omega derivative, central differences
    double e = 0.0, dn = 0.0;
    for (double v : dW) dn = std::max(dn, std::abs(v));
    for (int c = 0; c < k; ++c) {
      const double h = 1e-5;
      const double w0 = w[c];
      w[c] = w0 + h;
      fam.eval(w.data(), x1.data(), tmp.data());
      w[c] = w0 - h;
      fam.eval(w.data(), x1.data(), tmp2.data());
      w[c] = w0;
      for (int a = 0; a < n; ++a) e = std::max(e, std::abs((tmp[a] - tmp2[a]) / (2 * h) - dW[a * k + c]));
    }
    r.domega_fd_error = std::max(r.domega_fd_error, e / (1.0 + dn));
  }
  const double tol = 1e-6;
  r.pass_A1 = r.observed_lambda >= fam.lambda() * (1 - tol);
  r.pass_A2 = r.observed_Lambda <= fam.Lambda() * (1 + tol) && r.max_zero_value <= 1e-12;
  r.pass_A3 = r.domega_ratio <= fam.Lambda() * (1 + tol) && r.domega_xi_norm <= fam.Lambda() * (1 + tol);
  r.pass_derivatives = r.dxi_fd_error <= tol && r.domega_fd_error <= tol;
  return r;
}

}  // namespace homolab
