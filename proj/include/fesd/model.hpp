// Dynamic complementarity system models
//
//   x' = f(x,u) + grad_c(x) * lambda,   0 <= c(x)  PERP  lambda >= 0
//
// together with the analytic oracles used to cross-check solutions: the
// closed-form single-constraint multiplier and the exact tangent-cone
// projection.

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fesd/expr.hpp"

namespace fesd {

struct ActiveSetPartition {
  std::vector<int> strongly_active;
  std::vector<int> weakly_active;
  std::vector<int> inactive;
};

constexpr double kActiveSetTol = 1e-8;

class DcsModel {
 public:
  // f maps (x, u) -> R^{n_x} (variables ordered states then controls),
  // c maps x -> R^{n_c}. The state symbols of both graphs must agree.
  DcsModel(std::string name, ExprGraph f, ExprGraph c)
      : name_(std::move(name)), f_(std::move(f)), c_(std::move(c)) {
    n_x_ = static_cast<int>(c_.num_variables());
    n_c_ = static_cast<int>(c_.num_outputs());
    n_u_ = static_cast<int>(f_.num_variables()) - n_x_;
    if (n_c_ == 0) throw std::invalid_argument("DcsModel: constraint count must be >= 1");
    if (n_u_ < 0 || static_cast<int>(f_.num_outputs()) != n_x_)
      throw std::invalid_argument("DcsModel: f must map (x,u) to R^{n_x}");
    for (int i = 0; i < n_x_; ++i) {
      if (f_.variable_names()[i] != c_.variable_names()[i])
        throw std::invalid_argument("DcsModel: state symbols of f and c disagree");
    }
    jac_c_ = c_.jacobian();  // row-major (output k, variable j)
  }

  const std::string& name() const { return name_; }
  int n_x() const { return n_x_; }
  int n_u() const { return n_u_; }
  int n_c() const { return n_c_; }
  const ExprGraph& f_graph() const { return f_; }
  const ExprGraph& c_graph() const { return c_; }
  const ExprGraph& jac_c_graph() const { return jac_c_; }

  std::vector<std::string> state_names() const {
    return {c_.variable_names().begin(), c_.variable_names().end()};
  }
  std::vector<std::string> control_names() const {
    return {f_.variable_names().begin() + n_x_, f_.variable_names().end()};
  }

  Eigen::VectorXd f(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    check_dims(x, u);
    Eigen::VectorXd p(n_x_ + n_u_);
    p << x, u;
    return f_.evaluate(p);
  }

  Eigen::VectorXd c(const Eigen::VectorXd& x) const {
    if (x.size() != n_x_) throw std::invalid_argument("DcsModel::c: bad state dimension");
    return c_.evaluate(x);
  }

  // n_x x n_c; column k is grad c_k(x).
  Eigen::MatrixXd grad_c(const Eigen::VectorXd& x) const {
    if (x.size() != n_x_) throw std::invalid_argument("DcsModel::grad_c: bad state dimension");
    Eigen::VectorXd flat = jac_c_.evaluate(x);  // row-major (k, j)
    Eigen::MatrixXd g(n_x_, n_c_);
    for (int k = 0; k < n_c_; ++k)
      for (int j = 0; j < n_x_; ++j) g(j, k) = flat[k * n_x_ + j];
    return g;
  }

  // Linear independence of the active constraint gradients, checked by the
  // smallest singular value of the active-gradient matrix.
  bool check_licq(const Eigen::VectorXd& x, double tol = kActiveSetTol) const {
    const Eigen::VectorXd cv = c(x);
    std::vector<int> active;
    for (int k = 0; k < n_c_; ++k)
      if (std::abs(cv[k]) <= tol) active.push_back(k);
    if (active.empty()) return true;
    const Eigen::MatrixXd g = grad_c(x);
    Eigen::MatrixXd ga(n_x_, static_cast<int>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) ga.col(static_cast<int>(i)) = g.col(active[i]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ga);
    if (ga.cols() > ga.rows()) return false;
    return svd.singularValues().minCoeff() > tol;
  }

 private:
  void check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (x.size() != n_x_ || u.size() != n_u_)
      throw std::invalid_argument("DcsModel: bad state/control dimension");
  }

  std::string name_;
  ExprGraph f_;
  ExprGraph c_;
  ExprGraph jac_c_;
  int n_x_ = 0, n_u_ = 0, n_c_ = 0;
};

inline DcsModel make_dcs(ExprGraph f, ExprGraph c, std::string name = "model") {
  return DcsModel(std::move(name), std::move(f), std::move(c));
}

// Closed-form multiplier for points with at most one active constraint:
//   lambda_k = max(0, -(grad_ck^T grad_ck)^{-1} grad_ck^T f(x,u)),
// which is the unique value keeping d/dt c_k = 0 while lambda_k > 0. Note the
// sign: the time derivative of the complementarity condition demands the
// negated projection coefficient.
inline Eigen::VectorXd lambda_closed_form(const DcsModel& model, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& u,
                                          double tol = kActiveSetTol) {
  const Eigen::VectorXd cv = model.c(x);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(model.n_c());
  int active = -1;
  for (int k = 0; k < model.n_c(); ++k) {
    if (std::abs(cv[k]) <= tol) {
      if (active >= 0)
        throw std::invalid_argument(
            "lambda_closed_form: multiple active constraints are unsupported");
      active = k;
    }
  }
  if (active < 0) return lambda;
  const Eigen::VectorXd g = model.grad_c(x).col(active);
  const double gg = g.squaredNorm();
  if (gg <= tol * tol)
    throw std::invalid_argument("lambda_closed_form: active constraint gradient vanishes");
  lambda[active] = std::max(0.0, -g.dot(model.f(x, u)) / gg);
  return lambda;
}

inline ActiveSetPartition classify_active_sets(const DcsModel& model, const Eigen::VectorXd& x,
                                               const Eigen::VectorXd& lambda,
                                               double tol = kActiveSetTol) {
  if (tol <= 0.0) throw std::invalid_argument("classify_active_sets: tol must be positive");
  if (lambda.size() != model.n_c())
    throw std::invalid_argument("classify_active_sets: bad multiplier dimension");
  const Eigen::VectorXd cv = model.c(x);
  ActiveSetPartition p;
  for (int k = 0; k < model.n_c(); ++k) {
    if (std::abs(cv[k]) <= tol && lambda[k] > tol)
      p.strongly_active.push_back(k);
    else if (std::abs(cv[k]) <= tol && std::abs(lambda[k]) <= tol)
      p.weakly_active.push_back(k);
    else
      p.inactive.push_back(k);
  }
  return p;
}

// Exact projection of v onto the tangent cone at a feasible x:
//   argmin { |w - v|^2 : grad_ci(x)^T w >= 0 for all active i }.
// Solved by enumerating active subsets (n_c is small at desk scale) and
// checking the KKT conditions of each candidate.
inline Eigen::VectorXd project_tangent_cone(const DcsModel& model, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& v,
                                            double tol = kActiveSetTol) {
  const Eigen::VectorXd cv = model.c(x);
  if ((cv.array() < -tol).any())
    throw std::invalid_argument("project_tangent_cone: infeasible point");
  std::vector<int> active;
  for (int k = 0; k < model.n_c(); ++k)
    if (cv[k] <= tol) active.push_back(k);
  if (active.empty()) return v;

  const Eigen::MatrixXd gall = model.grad_c(x);
  Eigen::MatrixXd ga(static_cast<int>(active.size()), model.n_x());
  for (std::size_t i = 0; i < active.size(); ++i)
    ga.row(static_cast<int>(i)) = gall.col(active[i]).transpose();

  const int na = static_cast<int>(active.size());
  const double eps = 1e-10 * std::max(1.0, v.norm());
  // Subsets ordered by size so the unconstrained candidate is tried first.
  std::vector<int> subsets;
  for (int mask = 0; mask < (1 << na); ++mask) subsets.push_back(mask);
  std::sort(subsets.begin(), subsets.end(),
            [](int a, int b) { return std::make_pair(__builtin_popcount(a), a) <
                                      std::make_pair(__builtin_popcount(b), b); });
  for (int mask : subsets) {
    std::vector<int> rows;
    for (int i = 0; i < na; ++i)
      if (mask & (1 << i)) rows.push_back(i);
    Eigen::VectorXd w = v;
    Eigen::VectorXd mu;
    if (!rows.empty()) {
      Eigen::MatrixXd gs(static_cast<int>(rows.size()), model.n_x());
      for (std::size_t i = 0; i < rows.size(); ++i) gs.row(static_cast<int>(i)) = ga.row(rows[i]);
      const Eigen::MatrixXd gram = gs * gs.transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
      if (!lu.isInvertible()) continue;  // dependent subset; a smaller one covers it
      mu = lu.solve(-gs * v);
      if ((mu.array() < -eps).any()) continue;
      w = v + gs.transpose() * mu;
    }
    if ((ga * w).minCoeff() >= -eps) return w;
  }
  throw std::runtime_error("project_tangent_cone: no KKT-consistent subset found");
}

}  // namespace fesd
