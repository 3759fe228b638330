#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "fesd/expr.hpp"

using namespace fesd;

namespace {

// Example 1 constraint c(x) = x2 + 1.
ExprGraph constraint_graph() {
  ExprGraph g({"x1", "x2"});
  g.add_output(g.var(1) + 1.0);
  return g;
}

// Example 1 vector field f(x) = (x2, -x1).
ExprGraph rotation_graph() {
  ExprGraph g({"x1", "x2"});
  g.add_output(g.var(1));
  g.add_output(-g.var(0));
  return g;
}

// Disc gap |x3 - x1|^2 - 9 over (x1, x3) in R^4.
ExprGraph disc_gap_graph() {
  ExprGraph g({"x1a", "x1b", "x3a", "x3b"});
  Expr dx = g.var(2) - g.var(0);
  Expr dy = g.var(3) - g.var(1);
  g.add_output(dx * dx + dy * dy - 9.0);
  return g;
}

// Central finite differences at `point`, h = 1e-6.
Eigen::MatrixXd fd_jacobian(const ExprGraph& g, const Eigen::VectorXd& point) {
  const double h = 1e-6;
  const auto n = point.size();
  const auto m = static_cast<Eigen::Index>(g.num_outputs());
  Eigen::MatrixXd jac(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd lo = point, hi = point;
    lo[j] -= h;
    hi[j] += h;
    jac.col(j) = (g.evaluate(hi) - g.evaluate(lo)) / (2.0 * h);
  }
  return jac;
}

Eigen::MatrixXd eval_jacobian(const ExprGraph& g, const Eigen::VectorXd& point) {
  ExprGraph jg = g.jacobian();
  Eigen::VectorXd flat = jg.evaluate(point);
  const auto n = point.size();
  const auto m = static_cast<Eigen::Index>(g.num_outputs());
  Eigen::MatrixXd jac(m, n);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < n; ++c) jac(r, c) = flat[r * n + c];
  return jac;
}

Eigen::MatrixXd eval_hessian(const ExprGraph& scalar_graph, const Eigen::VectorXd& point,
                             const Eigen::VectorXd& weights) {
  std::vector<std::string> wnames;
  for (Eigen::Index i = 0; i < weights.size(); ++i) wnames.push_back("w" + std::to_string(i));
  ExprGraph hg = scalar_graph.hessian_of_weighted_sum(wnames);
  Eigen::VectorXd p(point.size() + weights.size());
  p << point, weights;
  Eigen::VectorXd flat = hg.evaluate(p);
  const auto n = point.size();
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) h(r, c) = flat[r * n + c];
  return h;
}

}  // namespace

TEST(Evaluate, Example1ConstraintOnBoundary) {
  ExprGraph g = constraint_graph();
  Eigen::Vector2d x(0.0, -1.0);
  EXPECT_DOUBLE_EQ(g.evaluate(x)[0], 0.0);
}

TEST(Evaluate, Example1Field) {
  ExprGraph g = rotation_graph();
  const double r2 = std::sqrt(2.0);
  Eigen::Vector2d x(r2, r2);
  Eigen::VectorXd f = g.evaluate(x);
  EXPECT_DOUBLE_EQ(f[0], r2);
  EXPECT_DOUBLE_EQ(f[1], -r2);
}

TEST(Evaluate, DiscGapAtStartConfiguration) {
  ExprGraph g = disc_gap_graph();
  Eigen::Vector4d x(-10.0, 10.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(g.evaluate(x)[0], 191.0);
}

TEST(Evaluate, DomainViolationsAreReported) {
  ExprGraph g({"x"});
  g.add_output(log(g.var(0)));
  EvalWorkspace ws;
  EXPECT_FALSE(g.evaluate(Eigen::VectorXd::Constant(1, -1.0), ws));
  ASSERT_TRUE(ws.error.has_value());
  EXPECT_EQ(ws.error->op, Op::kLog);
  EXPECT_THROW(g.evaluate(Eigen::VectorXd::Constant(1, 0.0)), EvalDomainError);

  ExprGraph d({"x"});
  d.add_output(1.0 / d.var(0));
  EXPECT_FALSE(d.evaluate(Eigen::VectorXd::Zero(1), ws));
  EXPECT_EQ(ws.error->op, Op::kDiv);
}

TEST(Evaluate, WrongPointLengthThrows) {
  ExprGraph g = constraint_graph();
  EXPECT_THROW(g.evaluate(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(Evaluate, Deterministic) {
  ExprGraph g = disc_gap_graph();
  Eigen::Vector4d x(0.3, -1.7, 2.9, 0.11);
  const double a = g.evaluate(x)[0];
  const double b = g.evaluate(x)[0];
  EXPECT_EQ(a, b);
  // A structurally identical rebuild evaluates bit-identically as well.
  const double c = disc_gap_graph().evaluate(x)[0];
  EXPECT_EQ(a, c);
}

TEST(Jacobian, ConstantGradients) {
  ExprGraph jc = constraint_graph().jacobian();
  Eigen::VectorXd at = Eigen::Vector2d(3.0, 4.0);
  Eigen::VectorXd flat = jc.evaluate(at);
  EXPECT_DOUBLE_EQ(flat[0], 0.0);
  EXPECT_DOUBLE_EQ(flat[1], 1.0);

  Eigen::MatrixXd jr = eval_jacobian(rotation_graph(), at);
  EXPECT_DOUBLE_EQ(jr(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(jr(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(jr(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(jr(1, 1), 0.0);
}

TEST(Jacobian, DiscGapGradient) {
  // d/dx1 |x3-x1|^2 = -2 (x3 - x1); at x1=(-10,10), x3=(0,0) that is (-20, 20).
  Eigen::Vector4d x(-10.0, 10.0, 0.0, 0.0);
  Eigen::MatrixXd j = eval_jacobian(disc_gap_graph(), x);
  EXPECT_DOUBLE_EQ(j(0, 0), -20.0);
  EXPECT_DOUBLE_EQ(j(0, 1), 20.0);
  EXPECT_DOUBLE_EQ(j(0, 2), 20.0);
  EXPECT_DOUBLE_EQ(j(0, 3), -20.0);
}

TEST(Jacobian, MatchesFiniteDifferencesOnRandomPoints) {
  // A mixed graph exercising every differentiable op.
  ExprGraph g({"a", "b", "c"});
  Expr a = g.var(0), b = g.var(1), c = g.var(2);
  g.add_output(sin(a) * cos(b) + exp(c / 4.0));
  g.add_output(sqrt(4.0 + a * a) * log(2.0 + b * b) - pow(c, 3.0));
  g.add_output((a - b) / (3.0 + c * c));

  std::mt19937 rng(42);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Vector3d x(box(rng), box(rng), box(rng));
    Eigen::MatrixXd exact = eval_jacobian(g, x);
    Eigen::MatrixXd approx = fd_jacobian(g, x);
    const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
    EXPECT_LT((exact - approx).cwiseAbs().maxCoeff() / scale, 1e-6);
  }
}

TEST(Hessian, LinearOutputsGiveZero) {
  ExprGraph g({"x", "y"});
  g.add_output(2.0 * g.var(0) - 3.0 * g.var(1));
  g.add_output(g.var(0) + g.var(1) + 5.0);
  Eigen::MatrixXd h =
      eval_hessian(g, Eigen::Vector2d(0.7, -0.3), Eigen::Vector2d(1.0, 2.0));
  EXPECT_EQ(h.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hessian, QuadraticGivesIdentity) {
  ExprGraph g({"x", "y", "z"});
  Expr x = g.var(0), y = g.var(1), z = g.var(2);
  g.add_output(0.5 * (x * x + y * y + z * z));
  Eigen::MatrixXd h = eval_hessian(g, Eigen::Vector3d(1.0, 2.0, 3.0),
                                   Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_TRUE(h.isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(Hessian, DiscGapBlockPattern) {
  Eigen::MatrixXd h = eval_hessian(disc_gap_graph(), Eigen::Vector4d(1.0, 2.0, 3.0, 4.0),
                                   Eigen::VectorXd::Constant(1, 1.0));
  Eigen::MatrixXd expected(4, 4);
  expected << 2, 0, -2, 0,
              0, 2, 0, -2,
             -2, 0, 2, 0,
              0, -2, 0, 2;
  EXPECT_TRUE(h.isApprox(expected));
}

TEST(Hessian, ExactlySymmetric) {
  ExprGraph g({"a", "b", "c"});
  Expr a = g.var(0), b = g.var(1), c = g.var(2);
  g.add_output(sin(a * b) * exp(c) + a * b * c + pow(2.0 + a * a, 1.5));
  Eigen::MatrixXd h = eval_hessian(g, Eigen::Vector3d(0.4, -0.9, 0.2),
                                   Eigen::VectorXd::Constant(1, 1.3));
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) EXPECT_EQ(h(r, col), h(col, r));
}

TEST(Hessian, AgreesWithDifferentiatedJacobianOnQuadratic) {
  ExprGraph g({"x", "y"});
  Expr x = g.var(0), y = g.var(1);
  g.add_output(3.0 * x * x + 2.0 * x * y + 7.0 * y * y - x + 4.0);

  Eigen::Vector2d at(0.3, -1.2);
  Eigen::MatrixXd h = eval_hessian(g, at, Eigen::VectorXd::Constant(1, 1.0));

  // Differentiate the jacobian graph: its 1x2 outputs differentiate to the
  // row-major 2x2 second-derivative matrix.
  ExprGraph jj = g.jacobian().jacobian();
  Eigen::VectorXd flat = jj.evaluate(at);
  Eigen::MatrixXd h2(2, 2);
  h2 << flat[0], flat[1], flat[2], flat[3];
  EXPECT_TRUE(h.isApprox(h2, 1e-14));
  Eigen::MatrixXd expected(2, 2);
  expected << 6, 2, 2, 14;
  EXPECT_TRUE(h.isApprox(expected));
}

TEST(MaxOp, TieTakesFirstArgumentDerivative) {
  ExprGraph g({"x"});
  Expr x = g.var(0);
  // max(2x, x+1): tie at x=1 where the derivative of the first argument (2)
  // must be selected.
  g.add_output(max(2.0 * x, x + 1.0));
  ExprGraph j = g.jacobian();
  EXPECT_DOUBLE_EQ(j.evaluate(Eigen::VectorXd::Constant(1, 1.0))[0], 2.0);
  EXPECT_DOUBLE_EQ(j.evaluate(Eigen::VectorXd::Constant(1, 2.0))[0], 2.0);
  EXPECT_DOUBLE_EQ(j.evaluate(Eigen::VectorXd::Constant(1, 0.0))[0], 1.0);
}

TEST(GraphBuild, ConstantFoldingKeepsDomainErrors) {
  ExprGraph g({"x"});
  // log(-1) must not fold into a NaN constant; it has to surface as an
  // evaluation error instead.
  g.add_output(log(g.constant(-1.0)) * g.var(0));
  EvalWorkspace ws;
  EXPECT_FALSE(g.evaluate(Eigen::VectorXd::Constant(1, 1.0), ws));
}

TEST(GraphBuild, InlineIntoSplicesVariables) {
  ExprGraph inner({"x", "y"});
  inner.add_output(inner.var(0) * inner.var(1) + 1.0);

  ExprGraph outer({"a"});
  Expr a = outer.var(0);
  Expr b = a + 2.0;
  auto outs = inner.inline_into(outer, {a.id(), b.id()});
  outer.add_output(outer.expr(outs[0]));
  // a*(a+2) + 1 at a=3 -> 16
  EXPECT_DOUBLE_EQ(outer.evaluate(Eigen::VectorXd::Constant(1, 3.0))[0], 16.0);
}
