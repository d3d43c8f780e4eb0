#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "homolab/material.hpp"

using namespace homolab;

namespace {

class NegativeIdentity final : public OperatorFamily {
 public:
  NegativeIdentity() : OperatorFamily(1, 2, 1, 1.0, 1.0, {}, "adversarial") {}
  void eval(const double*, const double* xi, double* out) const override {
    for (int i = 0; i < size(); ++i) out[i] = -xi[i];
  }
  void d_xi(const double*, const double*, double* jac) const override {
    const int n = size();
    for (int i = 0; i < n * n; ++i) jac[i] = (i % (n + 1) == 0) ? -1.0 : 0.0;
  }
  void d_omega(const double*, const double*, double* out) const override {
    for (int i = 0; i < size(); ++i) out[i] = 0.0;
  }
  FamilyPtr with_dim(int) const override { return std::make_shared<NegativeIdentity>(); }
};

Eigen::MatrixXd random_rotation(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> N;
  Eigen::MatrixXd G(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) G(i, j) = N(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  if (Q.determinant() < 0) Q.col(0) *= -1;
  return Q;
}

}  // namespace

TEST_CASE("convex mixture") {
  auto A = make_convex_mixture(make_linear_constant(1, 2, 1.0), make_linear_constant(1, 2, 2.0));
  const double xi[2] = {0.3, -0.7};
  double out[2];
  double w1 = 1.0;
  A->eval(&w1, xi, out);
  CHECK(out[0] == doctest::Approx(0.3));
  CHECK(out[1] == doctest::Approx(-0.7));
  double w0 = 0.0;  // w = 1/2
  A->eval(&w0, xi, out);
  CHECK(out[0] == doctest::Approx(1.5 * 0.3));
  const double z[2] = {0, 0};
  A->eval(&w0, z, out);
  CHECK(out[0] == 0.0);
  CHECK(A->lambda() == 1.0);
  CHECK(A->Lambda() == 2.0);
  CHECK_THROWS_AS(make_convex_mixture(make_linear_constant(1, 2, 1.0), make_linear_constant(1, 3, 1.0)),
                  std::invalid_argument);
  CHECK(validate_assumptions(*A, 500, 3).all_pass());
}

TEST_CASE("rational Uhlenbeck") {
  auto A = make_rational_uhlenbeck(1, 2);
  const double xi[2] = {1.2, -0.4};
  double out[2];
  double wm = -1.0;  // w = 0
  A->eval(&wm, xi, out);
  CHECK(out[0] == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-0.4).epsilon(1e-15));
  const double z[2] = {0, 0};
  double w = 0.3;
  A->eval(&w, z, out);
  CHECK(out[0] == 0.0);

  // frame indifference for systems m = 3
  auto S = make_rational_uhlenbeck(3, 2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd O = random_rotation(rng, 3);
    Eigen::Matrix<double, 3, 2, Eigen::RowMajor> X, OX, a, b;
    for (int i = 0; i < 6; ++i) X.data()[i] = N(rng);
    OX = O * X;
    double om = std::uniform_real_distribution<double>(-1, 1)(rng);
    S->eval(&om, X.data(), a.data());
    S->eval(&om, OX.data(), b.data());
    worst = std::max(worst, (b - O * a).norm());
  }
  CHECK(worst <= 1e-12);

  auto rep = validate_assumptions(*A, 10000, 11);
  CHECK(rep.pass_A1);
  CHECK(rep.pass_A2);
  CHECK(rep.pass_A3);
  CHECK(rep.pass_derivatives);
  CHECK(rep.observed_lambda < 0.46);  // the declared 7/16 is nearly attained
}

TEST_CASE("linear families") {
  auto A = make_linear_midpoint(1, 1);
  CHECK(A->lambda() == 1.0);
  CHECK(A->Lambda() == 2.0);
  const double xi = 2.0;
  double dw;
  double om = 0.4;
  A->d_omega(&om, &xi, &dw);
  CHECK(dw == doctest::Approx(1.0));  // |xi|/2
  CHECK(validate_assumptions(*A, 1000, 1).all_pass());
  CHECK(validate_assumptions(*make_linear_exp(1, 2, 0.5), 1000, 2).all_pass());

  LinearCoefficient bad;
  bad.a = [](const double* w, double* a) { a[0] = 1.0 + w[0]; };
  CHECK_THROWS_AS(make_linear(1, 1, 1, bad, 0.5, 2.0), std::invalid_argument);
  LinearCoefficient good;
  good.a = [](const double* w, double* a) {
    a[0] = 2.0 + 0.5 * w[0];
    a[1] = 0.3;
    a[2] = -0.3;
    a[3] = 2.0;
  };
  auto L = make_linear(1, 2, 1, good, 1.4, 3.0);
  CHECK(validate_assumptions(*L, 500, 9).all_pass());
}

TEST_CASE("validator detects non-monotone law") {
  NegativeIdentity neg;
  auto r = validate_assumptions(neg, 200, 1);
  CHECK_FALSE(r.pass_A1);
  CHECK(r.observed_lambda < 0.0);
  CHECK_THROWS_AS(validate_assumptions(neg, 50, 1), std::invalid_argument);
}

TEST_CASE("central FD mismatch is second order") {
  for (auto fam : {make_rational_uhlenbeck(1, 2), make_rational_uhlenbeck(2, 2)}) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 10; ++t) {
      std::vector<double> xi(fam->size());
      for (double& v : xi) v = U(rng);
      const double om = U(rng);
      const double e1 = dxi_fd_mismatch(*fam, &om, xi.data(), 1e-2);
      const double e2 = dxi_fd_mismatch(*fam, &om, xi.data(), 5e-3);
      CHECK(e1 / e2 >= 3.5);
      CHECK(e1 / e2 <= 4.5);
    }
  }
}

TEST_CASE("secant bounds for built-in families") {
  for (auto fam : {make_rational_uhlenbeck(1, 2), make_linear_midpoint(1, 2), make_linear_exp(1, 3, 0.7),
                   make_family("convex_mixture:lin1,rational_uhlenbeck", 1, 2)}) {
    auto r = validate_assumptions(*fam, 10000, 77);
    CHECK(r.observed_lambda >= fam->lambda() * (1 - 1e-9));
    CHECK(r.observed_Lambda <= fam->Lambda() * (1 + 1e-9));
  }
}

TEST_CASE("family config strings") {
  CHECK(make_family("rational_uhlenbeck", 1, 2)->flags().uhlenbeck);
  CHECK(make_family("linear:midpoint", 1, 1)->Lambda() == 2.0);
  CHECK(make_family("convex_mixture:lin1,lin2", 1, 2)->Lambda() == 2.0);
  CHECK(make_family("linear:exp", 1, 2, {{"kappa", 0.25}})->lambda() == doctest::Approx(std::exp(-0.25)));
  CHECK_THROWS_AS(make_family("nope", 1, 1), std::invalid_argument);
  CHECK(make_family("rational_uhlenbeck", 1, 2)->with_dim(3)->d() == 3);
}
