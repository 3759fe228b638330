#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "fesd/butcher.hpp"

using namespace fesd;

namespace {

// Independent order-condition oracle.
//
// B(p): sum_j b_j c_j^{q-1} = 1/q for q = 1..p
// C(eta): sum_j a_ij c_j^{q-1} = c_i^q / q for q = 1..eta, all i
double b_condition_error(const ButcherTableau& t, int p) {
  double err = 0.0;
  for (int q = 1; q <= p; ++q) {
    double s = 0.0;
    for (int j = 0; j < t.ns; ++j) s += t.b[j] * std::pow(t.c[j], q - 1);
    err = std::max(err, std::abs(s - 1.0 / q));
  }
  return err;
}

double c_condition_error(const ButcherTableau& t, int eta) {
  double err = 0.0;
  for (int q = 1; q <= eta; ++q)
    for (int i = 0; i < t.ns; ++i) {
      double s = 0.0;
      for (int j = 0; j < t.ns; ++j) s += t.a(i, j) * std::pow(t.c[j], q - 1);
      err = std::max(err, std::abs(s - std::pow(t.c[i], q) / q));
    }
  return err;
}

// One RK step on y' = z*y from y=1 with h=1 (direct linear solve).
double stability_function(const ButcherTableau& t, double z) {
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(t.ns, t.ns) - z * t.a;
  Eigen::VectorXd stages = lhs.lu().solve(Eigen::VectorXd::Ones(t.ns));
  return 1.0 + z * t.b.dot(stages);
}

// (ns-1, ns) Pade approximant of e^z, computed from factorials.
double radau_pade(int ns, double z) {
  const int k = ns - 1, m = ns;
  auto fact = [](int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  double num = 0.0, den = 0.0;
  for (int j = 0; j <= k; ++j)
    num += fact(k + m - j) * fact(k) / (fact(k + m) * fact(j) * fact(k - j)) * std::pow(z, j);
  for (int j = 0; j <= m; ++j)
    den += fact(k + m - j) * fact(m) / (fact(k + m) * fact(j) * fact(m - j)) * std::pow(-z, j);
  return num / den;
}

}  // namespace

TEST(RadauIIA, OneStageIsImplicitEuler) {
  ButcherTableau t = radau_iia(1);
  EXPECT_EQ(t.order, 1);
  EXPECT_DOUBLE_EQ(t.a(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.b[0], 1.0);
  EXPECT_DOUBLE_EQ(t.c[0], 1.0);
}

TEST(RadauIIA, TwoStageCoefficients) {
  ButcherTableau t = radau_iia(2);
  EXPECT_EQ(t.order, 3);
  EXPECT_NEAR(t.c[0], 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(t.c[1], 1.0);
  EXPECT_NEAR(t.a(0, 0), 5.0 / 12.0, 1e-15);
  EXPECT_NEAR(t.a(0, 1), -1.0 / 12.0, 1e-15);
  EXPECT_NEAR(t.a(1, 0), 3.0 / 4.0, 1e-15);
  EXPECT_NEAR(t.a(1, 1), 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(t.b[0], 3.0 / 4.0, 1e-15);
  EXPECT_NEAR(t.b[1], 1.0 / 4.0, 1e-15);
}

TEST(RadauIIA, OrderConditionsHold) {
  for (int ns = 1; ns <= 4; ++ns) {
    ButcherTableau t = radau_iia(ns);
    EXPECT_EQ(t.order, 2 * ns - 1);
    EXPECT_LT(b_condition_error(t, 2 * ns - 1), 1e-12) << "ns=" << ns;
    EXPECT_LT(c_condition_error(t, ns), 1e-12) << "ns=" << ns;
  }
}

TEST(RadauIIA, StructuralInvariants) {
  for (int ns = 1; ns <= 4; ++ns) {
    ButcherTableau t = radau_iia(ns);
    EXPECT_DOUBLE_EQ(t.c[ns - 1], 1.0);
    for (int i = 0; i < ns; ++i) EXPECT_NEAR(t.a.row(i).sum(), t.c[i], 1e-12);
    EXPECT_LT((t.b - t.a.row(ns - 1).transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(RadauIIA, StabilityFunctionMatchesPade) {
  const double samples[10] = {-10.0, -5.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.5, 3.0};
  for (int ns = 1; ns <= 4; ++ns) {
    ButcherTableau t = radau_iia(ns);
    for (double z : samples)
      EXPECT_NEAR(stability_function(t, z), radau_pade(ns, z), 1e-12)
          << "ns=" << ns << " z=" << z;
  }
}

TEST(RadauIIA, RejectsUnsupportedStageCounts) {
  EXPECT_THROW(radau_iia(0), std::invalid_argument);
  EXPECT_THROW(radau_iia(5), std::invalid_argument);
}
