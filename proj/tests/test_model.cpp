#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "fesd/model.hpp"
#include "fesd/models.hpp"

using namespace fesd;

namespace {

const Eigen::VectorXd kNoControl = Eigen::VectorXd::Zero(0);

// Random state/control samples of the bundled models with at most one active
// constraint; boundary contact is sampled explicitly since random points
// almost never land on it.
struct Sample {
  Eigen::VectorXd x, u;
};

std::vector<Sample> example1_samples(int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> box(-3.0, 3.0);
  std::bernoulli_distribution on_boundary(0.5);
  std::vector<Sample> out;
  while (static_cast<int>(out.size()) < count) {
    Sample s;
    s.x = Eigen::Vector2d(box(rng), on_boundary(rng) ? -1.0 : box(rng));
    s.u = kNoControl;
    if (s.x[1] < -1.0) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<Sample> coop_samples(int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> box(-8.0, 8.0);
  std::uniform_real_distribution<double> ubox(-10.0, 10.0);
  std::uniform_real_distribution<double> gap(0.5, 4.0);
  std::uniform_int_distribution<int> which(0, 2);  // interior, c1 active, c2 active
  std::vector<Sample> out;
  DcsModel model = coop_discs_model();
  while (static_cast<int>(out.size()) < count) {
    Eigen::Vector2d p3(box(rng), box(rng));
    Eigen::Vector2d p1(box(rng), box(rng));
    Eigen::Vector2d p2(box(rng), box(rng));
    const int mode = which(rng);
    auto place = [&](Eigen::Vector2d& p, bool active) {
      Eigen::Vector2d d = p - p3;
      if (d.norm() < 1e-6) d = Eigen::Vector2d(1.0, 0.0);
      p = p3 + d.normalized() * (active ? 3.0 : 3.0 + gap(rng));
    };
    place(p1, mode == 1);
    place(p2, mode == 2);
    Sample s;
    s.x.resize(6);
    s.x << p1, p2, p3;
    s.u.resize(4);
    s.u << ubox(rng), ubox(rng), ubox(rng), ubox(rng);
    if ((model.c(s.x).array() < -1e-12).any()) continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(MakeDcs, Example1Dimensions) {
  DcsModel m = example1_model();
  EXPECT_EQ(m.n_x(), 2);
  EXPECT_EQ(m.n_u(), 0);
  EXPECT_EQ(m.n_c(), 1);
  // grad c is constant (0, 1)
  for (double x1 : {-2.0, 0.0, 1.5})
    for (double x2 : {-1.0, 0.0, 2.0}) {
      Eigen::MatrixXd g = m.grad_c(Eigen::Vector2d(x1, x2));
      EXPECT_DOUBLE_EQ(g(0, 0), 0.0);
      EXPECT_DOUBLE_EQ(g(1, 0), 1.0);
    }
}

TEST(MakeDcs, CoopDiscsDimensions) {
  DcsModel m = coop_discs_model();
  EXPECT_EQ(m.n_x(), 6);
  EXPECT_EQ(m.n_u(), 4);
  EXPECT_EQ(m.n_c(), 2);
}

TEST(MakeDcs, RejectsDimensionMismatch) {
  // c over a different state dimension than f.
  ExprGraph f({"x1", "x2"});
  f.add_output(f.var(1));
  f.add_output(-f.var(0));
  ExprGraph c({"x1", "x2", "x3"});
  c.add_output(c.var(2));
  EXPECT_THROW(make_dcs(std::move(f), std::move(c)), std::invalid_argument);
}

TEST(MakeDcs, RejectsEmptyConstraintSet) {
  ExprGraph f({"x"});
  f.add_output(f.var(0));
  ExprGraph c({"x"});
  EXPECT_THROW(make_dcs(std::move(f), std::move(c)), std::invalid_argument);
}

TEST(LambdaClosedForm, SlidingEntryValue) {
  DcsModel m = example1_model();
  const double r3 = std::sqrt(3.0);
  Eigen::VectorXd lam = lambda_closed_form(m, Eigen::Vector2d(r3, -1.0), kNoControl);
  ASSERT_EQ(lam.size(), 1);
  EXPECT_NEAR(lam[0], r3, 1e-15);
}

TEST(LambdaClosedForm, SlidingExitIsZero) {
  DcsModel m = example1_model();
  Eigen::VectorXd lam = lambda_closed_form(m, Eigen::Vector2d(0.0, -1.0), kNoControl);
  EXPECT_DOUBLE_EQ(lam[0], 0.0);
}

TEST(LambdaClosedForm, InactiveConstraintGivesZero) {
  DcsModel m = example1_model();
  EXPECT_DOUBLE_EQ(lambda_closed_form(m, Eigen::Vector2d(0.5, 2.0), kNoControl)[0], 0.0);
}

TEST(LambdaClosedForm, MultipleActiveUnsupported) {
  DcsModel m = coop_discs_model();
  // Both discs exactly in contact with disc 3.
  Eigen::VectorXd x(6);
  x << -3.0, 0.0, 3.0, 0.0, 0.0, 0.0;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(4);
  EXPECT_THROW(lambda_closed_form(m, x, u), std::invalid_argument);
}

TEST(ClassifyActiveSets, Definitions) {
  DcsModel m = example1_model();
  Eigen::VectorXd lam(1);

  lam << 2.0;
  ActiveSetPartition p = classify_active_sets(m, Eigen::Vector2d(0.0, -1.0), lam, 1e-8);
  EXPECT_EQ(p.strongly_active, std::vector<int>{0});

  lam << 0.0;
  p = classify_active_sets(m, Eigen::Vector2d(0.0, -1.0), lam, 1e-8);
  EXPECT_EQ(p.weakly_active, std::vector<int>{0});

  p = classify_active_sets(m, Eigen::Vector2d(0.0, 2.0), lam, 1e-8);
  EXPECT_EQ(p.inactive, std::vector<int>{0});
}

TEST(ClassifyActiveSets, AlwaysPartitions) {
  DcsModel m = coop_discs_model();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> box(-6.0, 6.0);
  std::uniform_real_distribution<double> lbox(-1.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x[i] = box(rng);
    Eigen::VectorXd lam(2);
    lam << lbox(rng), lbox(rng);
    ActiveSetPartition p = classify_active_sets(m, x, lam, 1e-6);
    EXPECT_EQ(p.strongly_active.size() + p.weakly_active.size() + p.inactive.size(), 2u);
  }
}

TEST(ProjectTangentCone, Example1BoundaryProjection) {
  DcsModel m = example1_model();
  const double r3 = std::sqrt(3.0);
  Eigen::VectorXd w =
      project_tangent_cone(m, Eigen::Vector2d(r3, -1.0), Eigen::Vector2d(-1.0, -r3));
  EXPECT_NEAR(w[0], -1.0, 1e-12);
  EXPECT_NEAR(w[1], 0.0, 1e-12);
}

TEST(ProjectTangentCone, InteriorIsIdentity) {
  DcsModel m = example1_model();
  Eigen::Vector2d v(0.3, -5.0);
  EXPECT_TRUE(project_tangent_cone(m, Eigen::Vector2d(1.0, 1.0), v).isApprox(v));
}

TEST(ProjectTangentCone, FixedPointInsideCone) {
  DcsModel m = example1_model();
  Eigen::Vector2d v(-2.0, 0.7);  // already satisfies grad_c^T v >= 0
  EXPECT_TRUE(project_tangent_cone(m, Eigen::Vector2d(0.0, -1.0), v).isApprox(v));
}

TEST(ProjectTangentCone, InfeasiblePointThrows) {
  DcsModel m = example1_model();
  EXPECT_THROW(project_tangent_cone(m, Eigen::Vector2d(0.0, -2.0), Eigen::Vector2d(1.0, 1.0)),
               std::invalid_argument);
}

// The dynamic-complementarity field f + grad_c lambda with the closed-form
// multiplier must equal the tangent-cone projection of f at single-active
// points (the continuous-time equivalence the discretization builds on).
TEST(Equivalence, ClosedFormMatchesProjectionExample1) {
  DcsModel m = example1_model();
  for (const Sample& s : example1_samples(100, 123)) {
    Eigen::VectorXd f = m.f(s.x, s.u);
    Eigen::VectorXd lam = lambda_closed_form(m, s.x, s.u);
    Eigen::VectorXd dcs = f + m.grad_c(s.x) * lam;
    Eigen::VectorXd proj = project_tangent_cone(m, s.x, f);
    EXPECT_LT((dcs - proj).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Equivalence, ClosedFormMatchesProjectionCoopDiscs) {
  DcsModel m = coop_discs_model();
  for (const Sample& s : coop_samples(100, 321)) {
    Eigen::VectorXd f = m.f(s.x, s.u);
    Eigen::VectorXd lam = lambda_closed_form(m, s.x, s.u);
    Eigen::VectorXd dcs = f + m.grad_c(s.x) * lam;
    Eigen::VectorXd proj = project_tangent_cone(m, s.x, f);
    EXPECT_LT((dcs - proj).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Equivalence, MultiplierNonnegativeAndComplementary) {
  DcsModel m = coop_discs_model();
  for (const Sample& s : coop_samples(100, 99)) {
    Eigen::VectorXd lam = lambda_closed_form(m, s.x, s.u);
    Eigen::VectorXd c = m.c(s.x);
    for (int k = 0; k < m.n_c(); ++k) {
      EXPECT_GE(lam[k], 0.0);
      EXPECT_LE(std::abs(lam[k] * c[k]), 1e-9);
    }
  }
}

TEST(Licq, HoldsForBundledModels) {
  DcsModel m = coop_discs_model();
  Eigen::VectorXd x(6);
  x << -3.0, 0.0, 3.0, 0.0, 0.0, 0.0;  // both constraints active, gradients opposed
  EXPECT_TRUE(m.check_licq(x));
  for (const Sample& s : coop_samples(50, 5)) EXPECT_TRUE(m.check_licq(s.x));
}

TEST(Licq, DetectsDependentGradients) {
  // Duplicated constraint rows give linearly dependent active gradients.
  ExprGraph f({"x1", "x2"});
  f.add_output(f.var(1));
  f.add_output(-f.var(0));
  ExprGraph c({"x1", "x2"});
  c.add_output(c.var(1) + 1.0);
  c.add_output(2.0 * (c.var(1) + 1.0));
  DcsModel m = make_dcs(std::move(f), std::move(c));
  EXPECT_FALSE(m.check_licq(Eigen::Vector2d(0.0, -1.0)));
  EXPECT_TRUE(m.check_licq(Eigen::Vector2d(0.0, 0.0)));
}
