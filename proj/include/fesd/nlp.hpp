// Dense primal-dual interior-point solver for the smooth NLPs produced by
// the complementarity relaxation. Inequalities get slacks, variable bounds
// get log barriers, and the condensed symmetric KKT system is factorized
// with a dense Bunch-Kaufman decomposition plus inertia correction.
//
// Dense linear algebra is a deliberate scalability boundary: the intended
// problems stay below a few thousand variables.

#pragma once

#include <Eigen/Dense>

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fesd/expr.hpp"

namespace fesd {

struct NlpProblem {
  std::shared_ptr<const ExprGraph> graph;  // variables: decision block, then parameters
  int num_vars = 0;
  Eigen::VectorXd params;  // values of the trailing parameter variables
  std::uint32_t objective = 0;
  std::vector<std::uint32_t> equalities;
  std::vector<std::uint32_t> inequalities;  // g(z) >= 0
  Eigen::VectorXd lb, ub;                   // size num_vars, +-inf allowed
};

struct NlpOptions {
  double tol = 1e-9;
  // A run that stalls (line search or iteration budget) still counts as
  // solved-to-acceptable-level when the residual is below this.
  double acceptable_tol = 1e-9;
  int max_iter = 500;
  double mu_init = 0.1;
  double mu_factor = 0.2;   // monotone barrier reduction
  double reg_floor = 1e-8;  // initial Hessian regularization delta
  double reg_max = 1e12;
  int max_line_search = 40;
  int print_level = 0;
};

enum class SolveStatus {
  kSolved,
  kMaxIterations,
  kLineSearchFailure,
  kDiverged,
  kEvalError,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kSolved: return "solved";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kLineSearchFailure: return "line_search_failure";
    case SolveStatus::kDiverged: return "diverged";
    case SolveStatus::kEvalError: return "evaluation_error";
  }
  return "?";
}

struct KktResidual {
  double stationarity = 0.0;
  double eq_violation = 0.0;
  double ineq_violation = 0.0;  // violation of g >= 0 and of the bounds
  double dual_violation = 0.0;  // negativity of inequality/bound multipliers
  double complementarity = 0.0;

  double max() const {
    return std::max({stationarity, eq_violation, ineq_violation, dual_violation, complementarity});
  }
};

struct KktPoint {
  SolveStatus status = SolveStatus::kMaxIterations;
  Eigen::VectorXd primal;
  Eigen::VectorXd eq_mult;
  Eigen::VectorXd ineq_mult;
  Eigen::VectorXd slack;
  Eigen::VectorXd bound_mult_lo, bound_mult_hi;
  KktResidual residual;  // recomputed from the point, never accumulated
  double objective = 0.0;
  int iterations = 0;
  std::string message;
};

namespace detail {

// First and (optionally) second derivative tape compiled out of the problem
// graph: sparse index lists whose values are nodes appended to a private
// copy of the graph.
class CompiledNlp {
 public:
  struct JacEntry {
    int col;
    std::uint32_t node;
  };
  struct HessEntry {
    int row, col;  // row >= col
    std::uint32_t node;
  };

  CompiledNlp(const NlpProblem& p, bool second_order) : problem_(p) {
    if (!p.graph) throw std::invalid_argument("NlpProblem: null graph");
    n_ = p.num_vars;
    m_eq_ = static_cast<int>(p.equalities.size());
    m_in_ = static_cast<int>(p.inequalities.size());
    const int total_vars = static_cast<int>(p.graph->num_variables());
    if (total_vars != n_ + p.params.size())
      throw std::invalid_argument("NlpProblem: variable/parameter split mismatch");
    if (p.lb.size() != n_ || p.ub.size() != n_)
      throw std::invalid_argument("NlpProblem: bound dimensions");
    graph_ = p.graph->clone_without_outputs();
    value_limit_ = graph_.num_nodes();

    grad_obj_ = first_order(p.objective);
    jac_eq_.reserve(p.equalities.size());
    for (auto node : p.equalities) jac_eq_.push_back(first_order(node));
    jac_in_.reserve(p.inequalities.size());
    for (auto node : p.inequalities) jac_in_.push_back(first_order(node));

    if (second_order) {
      hess_obj_ = second_order_entries(p.objective);
      hess_eq_.reserve(p.equalities.size());
      for (auto node : p.equalities) hess_eq_.push_back(second_order_entries(node));
      hess_in_.reserve(p.inequalities.size());
      for (auto node : p.inequalities) hess_in_.push_back(second_order_entries(node));
    }
    full_point_.resize(total_vars);
    full_point_.tail(p.params.size()) = p.params;
  }

  int n() const { return n_; }
  int m_eq() const { return m_eq_; }
  int m_in() const { return m_in_; }
  const NlpProblem& problem() const { return problem_; }

  void set_params(const Eigen::VectorXd& params) {
    if (params.size() != problem_.params.size())
      throw std::invalid_argument("set_params: dimension mismatch");
    full_point_.tail(params.size()) = params;
  }

  // Values of objective and constraints only.
  bool eval_values(const Eigen::VectorXd& z, EvalWorkspace& ws) {
    full_point_.head(n_) = z;
    return graph_.evaluate_nodes(full_point_, ws, value_limit_);
  }

  // Values plus every derivative node.
  bool eval_all(const Eigen::VectorXd& z, EvalWorkspace& ws) {
    full_point_.head(n_) = z;
    return graph_.evaluate_nodes(full_point_, ws, graph_.num_nodes());
  }

  double objective_value(const EvalWorkspace& ws) const { return ws.values[problem_.objective]; }

  Eigen::VectorXd eq_values(const EvalWorkspace& ws) const {
    return gather(ws, problem_.equalities);
  }
  Eigen::VectorXd in_values(const EvalWorkspace& ws) const {
    return gather(ws, problem_.inequalities);
  }

  Eigen::VectorXd objective_gradient(const EvalWorkspace& ws) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_);
    for (const auto& e : grad_obj_) g[e.col] += ws.values[e.node];
    return g;
  }

  const std::vector<std::vector<JacEntry>>& jac_eq() const { return jac_eq_; }
  const std::vector<std::vector<JacEntry>>& jac_in() const { return jac_in_; }

  // W = hess(f) - sum_i y_i hess(cE_i) - sum_i w_i hess(cI_i), lower triangle.
  void lagrangian_hessian(const EvalWorkspace& ws, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, Eigen::MatrixXd& out) const {
    out.setZero(n_, n_);
    for (const auto& e : hess_obj_) out(e.row, e.col) += ws.values[e.node];
    for (int r = 0; r < m_eq_; ++r) {
      const double yr = y[r];
      if (yr == 0.0) continue;
      for (const auto& e : hess_eq_[static_cast<std::size_t>(r)])
        out(e.row, e.col) -= yr * ws.values[e.node];
    }
    for (int r = 0; r < m_in_; ++r) {
      const double wr = w[r];
      if (wr == 0.0) continue;
      for (const auto& e : hess_in_[static_cast<std::size_t>(r)])
        out(e.row, e.col) -= wr * ws.values[e.node];
    }
  }

 private:
  Eigen::VectorXd gather(const EvalWorkspace& ws, const std::vector<std::uint32_t>& ids) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) v[static_cast<Eigen::Index>(i)] = ws.values[ids[i]];
    return v;
  }

  std::vector<JacEntry> first_order(std::uint32_t output) {
    std::vector<JacEntry> row;
    for (auto& [v, node] : graph_.append_gradient(output)) {
      if (static_cast<int>(v) < n_) row.push_back({static_cast<int>(v), node});
    }
    return row;
  }

  std::vector<HessEntry> second_order_entries(std::uint32_t output) {
    std::vector<HessEntry> entries;
    auto grad = graph_.append_gradient(output);
    for (auto& [v1, gnode] : grad) {
      if (static_cast<int>(v1) >= n_) continue;
      for (auto& [v2, hnode] : graph_.append_gradient(gnode)) {
        // keep the lower triangle row >= col; the mirrored entry comes from
        // Schwarz symmetry at assembly time
        if (static_cast<int>(v2) >= n_ || v2 > v1) continue;
        entries.push_back({static_cast<int>(v1), static_cast<int>(v2), hnode});
      }
    }
    return entries;
  }

  NlpProblem problem_;
  ExprGraph graph_;
  std::size_t value_limit_ = 0;
  int n_ = 0, m_eq_ = 0, m_in_ = 0;
  std::vector<JacEntry> grad_obj_;
  std::vector<std::vector<JacEntry>> jac_eq_, jac_in_;
  std::vector<HessEntry> hess_obj_;
  std::vector<std::vector<HessEntry>> hess_eq_, hess_in_;
  Eigen::VectorXd full_point_;
};

// Dense symmetric-indefinite factorization (LAPACK Bunch-Kaufman) with
// inertia reporting.
class SymIndefFactor {
 public:
  bool factorize(const Eigen::MatrixXd& K) {
    const int n = static_cast<int>(K.rows());
    a_ = K;
    ipiv_.resize(static_cast<std::size_t>(n));
    const int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, a_.data(), n, ipiv_.data());
    ok_ = info == 0;
    if (!ok_) return false;
    n_pos_ = n_neg_ = n_zero_ = 0;
    for (int k = 0; k < n;) {
      if (ipiv_[static_cast<std::size_t>(k)] > 0) {
        const double d = a_(k, k);
        if (d > 0)
          ++n_pos_;
        else if (d < 0)
          ++n_neg_;
        else
          ++n_zero_;
        ++k;
      } else {
        // 2x2 pivot: always one positive and one negative eigenvalue
        ++n_pos_;
        ++n_neg_;
        k += 2;
      }
    }
    return true;
  }

  bool solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& x) const {
    if (!ok_) return false;
    x = rhs;
    const int n = static_cast<int>(a_.rows());
    const int info = LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n, 1, a_.data(), n, ipiv_.data(),
                                    x.data(), n);
    return info == 0;
  }

  int positive() const { return n_pos_; }
  int negative() const { return n_neg_; }
  int zero() const { return n_zero_; }

 private:
  Eigen::MatrixXd a_;
  std::vector<lapack_int> ipiv_;
  int n_pos_ = 0, n_neg_ = 0, n_zero_ = 0;
  bool ok_ = false;
};

}  // namespace detail

struct SolverStats {
  int iterations = 0;
  int factorizations = 0;
  double final_mu = 0.0;
};

class NlpSolver {
 public:
  explicit NlpSolver(const NlpProblem& problem)
      : compiled_(problem, /*second_order=*/true) {}

  void set_params(const Eigen::VectorXd& params) { compiled_.set_params(params); }

  const SolverStats& stats() const { return stats_; }

  // Cold start from a primal point (clipped into the bound interior).
  KktPoint solve(const Eigen::VectorXd& start, const NlpOptions& opts = {}) {
    return run(start, nullptr, opts);
  }

  // Warm start from a previous solution: primal and multipliers carry over,
  // slacks are refreshed from the constraint values and bound multipliers are
  // re-centered on the new barrier.
  KktPoint solve_warm(const KktPoint& warm, const NlpOptions& opts = {}) {
    return run(warm.primal, &warm, opts);
  }

  // Residuals recomputed from scratch at an arbitrary primal-dual point.
  KktResidual kkt_residual(const KktPoint& point) {
    EvalWorkspace ws;
    if (!compiled_.eval_all(point.primal, ws)) {
      KktResidual r;
      r.stationarity = std::numeric_limits<double>::infinity();
      return r;
    }
    return residual_at(ws, point.primal, point.eq_mult, point.ineq_mult, point.bound_mult_lo,
                       point.bound_mult_hi, 0.0);
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Iterate {
    Eigen::VectorXd z, s, y, w, zl, zu;
  };

  KktPoint run(const Eigen::VectorXd& start, const KktPoint* warm, const NlpOptions& opts) {
    const int n = compiled_.n();
    const int m_eq = compiled_.m_eq();
    const int m_in = compiled_.m_in();
    const Eigen::VectorXd& lb = compiled_.problem().lb;
    const Eigen::VectorXd& ub = compiled_.problem().ub;
    stats_ = {};
    merit_rho_ = 1.0;
    consecutive_ls_failures_ = 0;
    ls_damping_ = 0.0;

    KktPoint result;
    if (start.size() != n) {
      result.status = SolveStatus::kEvalError;
      result.message = "start point dimension mismatch";
      return result;
    }

    double mu = opts.mu_init;

    Iterate it;
    it.z = start;
    // Push the primal strictly inside the bounds.
    for (int j = 0; j < n; ++j) {
      const double span = std::isfinite(lb[j]) && std::isfinite(ub[j]) ? ub[j] - lb[j] : kInf;
      const double pad = std::min(1e-2 * std::max(1.0, std::abs(it.z[j])), 0.25 * span);
      if (std::isfinite(lb[j])) it.z[j] = std::max(it.z[j], lb[j] + pad);
      if (std::isfinite(ub[j])) it.z[j] = std::min(it.z[j], ub[j] - pad);
    }

    EvalWorkspace ws;
    if (!compiled_.eval_all(it.z, ws)) {
      result.status = SolveStatus::kEvalError;
      result.message = "evaluation failed at start: " + ws.error->message;
      return result;
    }

    Eigen::VectorXd c_in = compiled_.in_values(ws);
    it.s.resize(m_in);
    it.w.resize(m_in);
    for (int i = 0; i < m_in; ++i) {
      if (warm) {
        it.s[i] = std::max(c_in[i], 0.1 * mu);
        it.w[i] = std::max(warm->ineq_mult.size() == m_in ? warm->ineq_mult[i] : mu / it.s[i],
                           1e-10);
      } else {
        it.s[i] = std::max(c_in[i], 1e-2);
        it.w[i] = std::min(mu / it.s[i], 1.0);
      }
    }
    it.y = (warm && warm->eq_mult.size() == m_eq) ? warm->eq_mult : Eigen::VectorXd::Zero(m_eq);
    it.zl.resize(n);
    it.zu.resize(n);
    for (int j = 0; j < n; ++j) {
      it.zl[j] = std::isfinite(lb[j]) ? mu / (it.z[j] - lb[j]) : 0.0;
      it.zu[j] = std::isfinite(ub[j]) ? mu / (ub[j] - it.z[j]) : 0.0;
    }

    const double z0_norm = it.z.norm();
    double delta_w_last = 0.0;

    Eigen::MatrixXd W(n, n), K;
    Eigen::VectorXd rhs, step;
    detail::SymIndefFactor factor;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
      stats_.iterations = iter + 1;
      if (!compiled_.eval_all(it.z, ws)) {
        result.status = SolveStatus::kEvalError;
        result.message = "evaluation failed: " + ws.error->message;
        break;
      }

      const KktResidual res0 = residual_at(ws, it.z, it.y, it.w, it.zl, it.zu, 0.0);
      if (opts.print_level > 0)
        std::printf("ip iter %3d mu %8.2e kkt %8.2e st %8.2e eq %8.2e iv %8.2e cp %8.2e%s", iter,
                    mu, res0.max(), res0.stationarity, res0.eq_violation, res0.ineq_violation,
                    res0.complementarity, opts.print_level > 1 ? " " : "\n");
      if (res0.max() <= opts.tol) {
        result.status = SolveStatus::kSolved;
        break;
      }
      const KktResidual res_mu = residual_at(ws, it.z, it.y, it.w, it.zl, it.zu, mu);
      maybe_reduce_mu(res_mu, opts, mu);

      // First-order data.
      const Eigen::VectorXd grad_f = compiled_.objective_gradient(ws);
      const Eigen::VectorXd c_eq = compiled_.eq_values(ws);
      c_in = compiled_.in_values(ws);

      // rd = grad f - JE^T y - JI^T w - zl + zu
      Eigen::VectorXd rd = grad_f - it.zl + it.zu;
      for (int r = 0; r < m_eq; ++r)
        for (const auto& e : compiled_.jac_eq()[static_cast<std::size_t>(r)])
          rd[e.col] -= it.y[r] * ws.values[e.node];
      for (int r = 0; r < m_in; ++r)
        for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
          rd[e.col] -= it.w[r] * ws.values[e.node];

      const Eigen::VectorXd r_in = c_in - it.s;

      // Condensed KKT matrix.
      compiled_.lagrangian_hessian(ws, it.y, it.w, W);
      for (int j = 0; j < n; ++j) {
        double d = 0.0;
        if (std::isfinite(lb[j])) d += it.zl[j] / (it.z[j] - lb[j]);
        if (std::isfinite(ub[j])) d += it.zu[j] / (ub[j] - it.z[j]);
        W(j, j) += d;
      }
      for (int r = 0; r < m_in; ++r) {
        const auto& row = compiled_.jac_in()[static_cast<std::size_t>(r)];
        const double d = it.w[r] / it.s[r];
        for (std::size_t p = 0; p < row.size(); ++p) {
          const double vp = ws.values[row[p].node];
          for (std::size_t q = 0; q <= p; ++q) {
            const double vq = ws.values[row[q].node];
            const int cp = row[p].col, cq = row[q].col;
            if (cp >= cq)
              W(cp, cq) += d * vp * vq;
            else
              W(cq, cp) += d * vp * vq;
          }
        }
      }

      // RHS pieces. b1_base carries everything independent of the inequality
      // residual so the second-order correction can swap r_in out.
      Eigen::VectorXd b1_base = -rd;
      for (int j = 0; j < n; ++j) {
        if (std::isfinite(lb[j]))
          b1_base[j] += (mu - (it.z[j] - lb[j]) * it.zl[j]) / (it.z[j] - lb[j]);
        if (std::isfinite(ub[j]))
          b1_base[j] -= (mu - (ub[j] - it.z[j]) * it.zu[j]) / (ub[j] - it.z[j]);
      }
      for (int r = 0; r < m_in; ++r) {
        const double coeff = (mu - it.s[r] * it.w[r]) / it.s[r];
        for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
          b1_base[e.col] += coeff * ws.values[e.node];
      }
      Eigen::VectorXd b1 = b1_base;
      for (int r = 0; r < m_in; ++r) {
        const double coeff = -(it.w[r] / it.s[r]) * r_in[r];
        for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
          b1[e.col] += coeff * ws.values[e.node];
      }

      const int dim = n + m_eq;
      K.setZero(dim, dim);
      K.topLeftCorner(n, n) = W;  // lower triangle filled; upper unused
      for (int r = 0; r < m_eq; ++r)
        for (const auto& e : compiled_.jac_eq()[static_cast<std::size_t>(r)])
          K(n + r, e.col) = ws.values[e.node];
      rhs.resize(dim);

      // Inertia-corrected factorization. ls_damping_ carries extra Levenberg
      // damping grown whenever the merit search keeps truncating steps.
      double delta_w = ls_damping_, delta_c = 0.0;
      bool factored = false;
      for (int attempt = 0; attempt < 60; ++attempt) {
        Eigen::MatrixXd Kt = K;
        if (delta_w > 0.0) Kt.topLeftCorner(n, n).diagonal().array() += delta_w;
        if (m_eq > 0) Kt.bottomRightCorner(m_eq, m_eq).diagonal().array() -= std::max(delta_c, 0.0);
        ++stats_.factorizations;
        const bool ok = factor.factorize(Kt);
        if (ok && factor.positive() == n && factor.negative() == m_eq && factor.zero() == 0) {
          factored = true;
          break;
        }
        if ((!ok || factor.zero() > 0) && delta_c == 0.0) delta_c = 1e-8 * std::max(1.0, mu);
        delta_w = delta_w <= ls_damping_ ? std::max({opts.reg_floor, 0.25 * delta_w_last,
                                                     8.0 * ls_damping_})
                                         : delta_w * 8.0;
        if (delta_w > opts.reg_max) break;
      }
      if (!factored) {
        result.status = SolveStatus::kLineSearchFailure;
        result.message = "KKT inertia correction failed";
        break;
      }
      if (delta_w > 0.0) delta_w_last = delta_w;

      Eigen::MatrixXd Kfull;
      {
        Eigen::MatrixXd Kt = K;
        if (delta_w > 0.0) Kt.topLeftCorner(n, n).diagonal().array() += delta_w;
        if (m_eq > 0) Kt.bottomRightCorner(m_eq, m_eq).diagonal().array() -= std::max(delta_c, 0.0);
        Kfull = Kt.selfadjointView<Eigen::Lower>();
      }
      // Solve with one round of iterative refinement.
      auto solve_kkt = [&](const Eigen::VectorXd& top, const Eigen::VectorXd& eq_rhs,
                           Eigen::VectorXd& out) {
        rhs.head(n) = top;
        rhs.tail(m_eq) = -eq_rhs;
        if (!factor.solve(rhs, out)) return false;
        Eigen::VectorXd resid = rhs - Kfull * out;
        Eigen::VectorXd corr;
        if (factor.solve(resid, corr)) out += corr;
        return true;
      };
      // Recovers the eliminated slack/dual steps for a primal direction.
      auto expand_direction = [&](const Eigen::VectorXd& dz, const Eigen::VectorXd& rin_used,
                                  Eigen::VectorXd& ds, Eigen::VectorXd& dw, Eigen::VectorXd& dzl,
                                  Eigen::VectorXd& dzu) {
        ds.resize(m_in);
        dw.resize(m_in);
        for (int r = 0; r < m_in; ++r) {
          double jdz = 0.0;
          for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
            jdz += ws.values[e.node] * dz[e.col];
          ds[r] = jdz + rin_used[r];
          dw[r] = (mu - it.s[r] * it.w[r]) / it.s[r] - (it.w[r] / it.s[r]) * ds[r];
        }
        dzl.resize(n);
        dzu.resize(n);
        for (int j = 0; j < n; ++j) {
          dzl[j] = std::isfinite(lb[j])
                       ? (mu - (it.z[j] - lb[j]) * it.zl[j]) / (it.z[j] - lb[j]) -
                             it.zl[j] / (it.z[j] - lb[j]) * dz[j]
                       : 0.0;
          dzu[j] = std::isfinite(ub[j])
                       ? (mu - (ub[j] - it.z[j]) * it.zu[j]) / (ub[j] - it.z[j]) +
                             it.zu[j] / (ub[j] - it.z[j]) * dz[j]
                       : 0.0;
        }
      };
      const double tau = std::max(0.99, 1.0 - mu);
      auto fraction_primal = [&](const Eigen::VectorXd& dz, const Eigen::VectorXd& ds) {
        double a = 1.0;
        for (int r = 0; r < m_in; ++r)
          if (ds[r] < 0.0) a = std::min(a, -tau * it.s[r] / ds[r]);
        for (int j = 0; j < n; ++j) {
          if (std::isfinite(lb[j]) && dz[j] < 0.0) a = std::min(a, -tau * (it.z[j] - lb[j]) / dz[j]);
          if (std::isfinite(ub[j]) && dz[j] > 0.0) a = std::min(a, tau * (ub[j] - it.z[j]) / dz[j]);
        }
        return a;
      };
      auto fraction_dual = [&](const Eigen::VectorXd& dw, const Eigen::VectorXd& dzl,
                               const Eigen::VectorXd& dzu) {
        double a = 1.0;
        for (int r = 0; r < m_in; ++r)
          if (dw[r] < 0.0) a = std::min(a, -tau * it.w[r] / dw[r]);
        for (int j = 0; j < n; ++j) {
          if (dzl[j] < 0.0) a = std::min(a, -tau * it.zl[j] / dzl[j]);
          if (dzu[j] < 0.0) a = std::min(a, -tau * it.zu[j] / dzu[j]);
        }
        return a;
      };

      if (!solve_kkt(b1, c_eq, step)) {
        result.status = SolveStatus::kLineSearchFailure;
        result.message = "KKT solve failed";
        break;
      }
      Eigen::VectorXd dz = step.head(n);
      Eigen::VectorXd dy = -step.tail(m_eq);
      Eigen::VectorXd ds, dw, dzl, dzu;
      expand_direction(dz, r_in, ds, dw, dzl, dzu);
      double alpha_p = fraction_primal(dz, ds);
      double alpha_d = fraction_dual(dw, dzl, dzu);

      // l1 merit line search with a single second-order correction round.
      const double theta0 = c_eq.template lpNorm<1>() + r_in.template lpNorm<1>();
      double dbarrier = grad_f.dot(dz);
      for (int r = 0; r < m_in; ++r) dbarrier -= mu * ds[r] / it.s[r];
      for (int j = 0; j < n; ++j) {
        if (std::isfinite(lb[j])) dbarrier -= mu * dz[j] / (it.z[j] - lb[j]);
        if (std::isfinite(ub[j])) dbarrier += mu * dz[j] / (ub[j] - it.z[j]);
      }
      if (theta0 > 1e-14) {
        const double needed = dbarrier / (0.5 * theta0);
        if (needed > merit_rho_) merit_rho_ = needed + 1.0;
      }
      const double phi0 = merit_value(ws, it, mu, lb, ub) + merit_rho_ * theta0;
      const double dphi = dbarrier - merit_rho_ * theta0;
      const double noise =
          10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(phi0));

      Iterate trial = it;
      EvalWorkspace trial_ws;
      auto merit_at = [&](const Iterate& cand, double& theta_out) {
        if (!compiled_.eval_values(cand.z, trial_ws))
          return std::numeric_limits<double>::infinity();
        const Eigen::VectorXd tc_eq = compiled_.eq_values(trial_ws);
        const Eigen::VectorXd tc_in = compiled_.in_values(trial_ws);
        theta_out = tc_eq.template lpNorm<1>() + (tc_in - cand.s).template lpNorm<1>();
        return merit_value(trial_ws, cand, mu, lb, ub) + merit_rho_ * theta_out;
      };

      double alpha = alpha_p;
      bool accepted = false;
      bool tried_soc = false;
      for (int ls = 0; ls < opts.max_line_search; ++ls) {
        trial.z = it.z + alpha * dz;
        trial.s = it.s + alpha * ds;
        double theta_t = 0.0;
        const double phi_t = merit_at(trial, theta_t);
        if (phi_t <= phi0 + 1e-4 * alpha * dphi + noise) {
          accepted = true;
          break;
        }
        // Second-order correction: retry the full step with the constraint
        // values re-expanded at the trial point, which removes the quadratic
        // constraint overshoot that otherwise shrinks alpha to nothing.
        if (!tried_soc && ls == 0 && std::isfinite(theta_t) && theta_t > theta0) {
          tried_soc = true;
          const Eigen::VectorXd tc_eq = compiled_.eq_values(trial_ws);
          const Eigen::VectorXd tc_in = compiled_.in_values(trial_ws);
          Eigen::VectorXd c_soc = alpha * c_eq + tc_eq;
          Eigen::VectorXd rin_soc = alpha * r_in + (tc_in - trial.s);
          Eigen::VectorXd b1_soc = b1_base;
          for (int r = 0; r < m_in; ++r) {
            const double coeff = -(it.w[r] / it.s[r]) * rin_soc[r];
            for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
              b1_soc[e.col] += coeff * ws.values[e.node];
          }
          Eigen::VectorXd step_soc;
          if (solve_kkt(b1_soc, c_soc, step_soc)) {
            Eigen::VectorXd dz_soc = step_soc.head(n);
            Eigen::VectorXd ds_soc, dw_soc, dzl_soc, dzu_soc;
            expand_direction(dz_soc, rin_soc, ds_soc, dw_soc, dzl_soc, dzu_soc);
            const double alpha_soc = fraction_primal(dz_soc, ds_soc);
            Iterate cand = it;
            cand.z = it.z + alpha_soc * dz_soc;
            cand.s = it.s + alpha_soc * ds_soc;
            double theta_soc = 0.0;
            const double phi_soc = merit_at(cand, theta_soc);
            if (phi_soc <= phi0 + 1e-4 * alpha_soc * dphi + noise) {
              dz = std::move(dz_soc);
              ds = std::move(ds_soc);
              dw = std::move(dw_soc);
              dzl = std::move(dzl_soc);
              dzu = std::move(dzu_soc);
              dy = -step_soc.tail(m_eq);
              alpha = alpha_soc;
              alpha_d = fraction_dual(dw, dzl, dzu);
              trial = cand;
              accepted = true;
              break;
            }
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // Small fallback step keeps the homotopy moving on hard nonconvex
        // stages; persistent failures become a structured failure.
        if (consecutive_ls_failures_ >= 4) {
          result.status = SolveStatus::kLineSearchFailure;
          result.message = "merit line search failed";
          break;
        }
        ++consecutive_ls_failures_;
        alpha = std::min(1e-3, alpha_p);
        trial.z = it.z + alpha * dz;
        trial.s = it.s + alpha * ds;
        if (!compiled_.eval_values(trial.z, trial_ws)) {
          result.status = SolveStatus::kEvalError;
          result.message = "evaluation failed in line search";
          break;
        }
      } else {
        consecutive_ls_failures_ = 0;
      }
      // Step-quality feedback into the damping.
      if (alpha < 1e-2)
        ls_damping_ = std::min(std::max(10.0 * ls_damping_, opts.reg_floor * 100.0), 1e4);
      else if (alpha > 0.5)
        ls_damping_ = ls_damping_ > 1e-10 ? ls_damping_ / 5.0 : 0.0;

      if (opts.print_level > 1) {
        int imax = 0;
        dz.cwiseAbs().maxCoeff(&imax);
        std::printf(
            "| a %8.2e ap %8.2e ad %8.2e dw %8.2e dc %8.2e th %8.2e rho %8.2e |dz| %8.2e @%s\n",
            alpha, alpha_p, alpha_d, delta_w, delta_c, theta0, merit_rho_,
            dz.cwiseAbs().maxCoeff(),
            compiled_.problem().graph->variable_names()[static_cast<std::size_t>(imax)].c_str());
      }

      it.z = trial.z;
      it.s = trial.s;
      // Near a solution the merit search can truncate alpha while the dual
      // equilibrium still needs the full correction; stationarity is linear
      // in y at fixed z, so the longer dual step is safe there.
      it.y += (res0.max() <= 1e-4 ? alpha_d : alpha) * dy;
      it.w += alpha_d * dw;
      it.zl += alpha_d * dzl;
      it.zu += alpha_d * dzu;

      // Keep bound duals within a centrality corridor (IPOPT's kappa_Sigma).
      constexpr double kSigma = 1e10;
      for (int j = 0; j < n; ++j) {
        if (std::isfinite(lb[j])) {
          const double prim = std::max(it.z[j] - lb[j], 1e-300);
          it.zl[j] = std::clamp(it.zl[j], mu / (kSigma * prim), kSigma * mu / prim);
        }
        if (std::isfinite(ub[j])) {
          const double prim = std::max(ub[j] - it.z[j], 1e-300);
          it.zu[j] = std::clamp(it.zu[j], mu / (kSigma * prim), kSigma * mu / prim);
        }
      }
      for (int r = 0; r < m_in; ++r) {
        const double prim = std::max(it.s[r], 1e-300);
        it.w[r] = std::clamp(it.w[r], mu / (kSigma * prim), kSigma * mu / prim);
      }

      if (it.z.norm() > 1e10 * std::max(1.0, z0_norm)) {
        result.status = SolveStatus::kDiverged;
        result.message = "iterates diverged";
        break;
      }
    }

    stats_.final_mu = mu;
    finalize(result, it, opts);
    return result;
  }

  // Monotone Fiacco-McCormick update once the barrier problem is solved to
  // within a factor of mu.
  void maybe_reduce_mu(const KktResidual& res_mu, const NlpOptions& opts, double& mu) const {
    const double floor_mu = std::max(opts.tol / 100.0, 1e-16);
    if (mu > floor_mu && res_mu.max() <= 10.0 * mu) mu = std::max(floor_mu, mu * opts.mu_factor);
  }

  double merit_value(const EvalWorkspace& ws, const Iterate& itr, double mu,
                     const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) const {
    double phi = compiled_.objective_value(ws);
    for (int r = 0; r < compiled_.m_in(); ++r) {
      if (itr.s[r] <= 0.0) return kInf;
      phi -= mu * std::log(itr.s[r]);
    }
    for (int j = 0; j < compiled_.n(); ++j) {
      if (std::isfinite(lb[j])) {
        if (itr.z[j] <= lb[j]) return kInf;
        phi -= mu * std::log(itr.z[j] - lb[j]);
      }
      if (std::isfinite(ub[j])) {
        if (itr.z[j] >= ub[j]) return kInf;
        phi -= mu * std::log(ub[j] - itr.z[j]);
      }
    }
    return phi;
  }

  KktResidual residual_at(const EvalWorkspace& ws, const Eigen::VectorXd& z,
                          const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                          const Eigen::VectorXd& zl, const Eigen::VectorXd& zu, double mu) const {
    const int n = compiled_.n();
    const int m_eq = compiled_.m_eq();
    const int m_in = compiled_.m_in();
    const Eigen::VectorXd& lb = compiled_.problem().lb;
    const Eigen::VectorXd& ub = compiled_.problem().ub;

    Eigen::VectorXd rd = compiled_.objective_gradient(ws) - zl + zu;
    for (int r = 0; r < m_eq; ++r)
      for (const auto& e : compiled_.jac_eq()[static_cast<std::size_t>(r)])
        rd[e.col] -= y[r] * ws.values[e.node];
    for (int r = 0; r < m_in; ++r)
      for (const auto& e : compiled_.jac_in()[static_cast<std::size_t>(r)])
        rd[e.col] -= w[r] * ws.values[e.node];

    KktResidual res;
    res.stationarity = rd.size() ? rd.cwiseAbs().maxCoeff() : 0.0;
    const Eigen::VectorXd c_eq = compiled_.eq_values(ws);
    res.eq_violation = c_eq.size() ? c_eq.cwiseAbs().maxCoeff() : 0.0;

    const Eigen::VectorXd c_in = compiled_.in_values(ws);
    for (int r = 0; r < m_in; ++r) {
      res.ineq_violation = std::max(res.ineq_violation, -c_in[r]);
      res.dual_violation = std::max(res.dual_violation, -w[r]);
      res.complementarity = std::max(res.complementarity,
                                     std::abs(std::max(c_in[r], 0.0) * w[r] - mu));
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(lb[j])) {
        res.ineq_violation = std::max(res.ineq_violation, lb[j] - z[j]);
        res.dual_violation = std::max(res.dual_violation, -zl[j]);
        res.complementarity =
            std::max(res.complementarity, std::abs((z[j] - lb[j]) * zl[j] - mu));
      }
      if (std::isfinite(ub[j])) {
        res.ineq_violation = std::max(res.ineq_violation, z[j] - ub[j]);
        res.dual_violation = std::max(res.dual_violation, -zu[j]);
        res.complementarity =
            std::max(res.complementarity, std::abs((ub[j] - z[j]) * zu[j] - mu));
      }
    }
    return res;
  }

  void finalize(KktPoint& result, const Iterate& it, const NlpOptions& opts) {
    result.primal = it.z;
    result.eq_mult = it.y;
    result.ineq_mult = it.w;
    result.slack = it.s;
    result.bound_mult_lo = it.zl;
    result.bound_mult_hi = it.zu;
    result.iterations = stats_.iterations;
    EvalWorkspace ws;
    if (compiled_.eval_all(it.z, ws)) {
      result.objective = compiled_.objective_value(ws);
      result.residual = residual_at(ws, it.z, it.y, it.w, it.zl, it.zu, 0.0);
      const bool stalled = result.status == SolveStatus::kMaxIterations ||
                           result.status == SolveStatus::kLineSearchFailure;
      if (result.status != SolveStatus::kSolved &&
          (result.residual.max() <= opts.tol ||
           (stalled && result.residual.max() <= opts.acceptable_tol))) {
        if (result.residual.max() > opts.tol) result.message = "solved to acceptable level";
        result.status = SolveStatus::kSolved;
      }
    } else if (result.status == SolveStatus::kSolved) {
      result.status = SolveStatus::kEvalError;
      result.message = "evaluation failed at final point";
    }
  }

  detail::CompiledNlp compiled_;
  SolverStats stats_;
  double merit_rho_ = 1.0;
  int consecutive_ls_failures_ = 0;
  double ls_damping_ = 0.0;
};

// Residual record at a given primal-dual point, recomputed from the problem
// data (first-order information only).
inline KktResidual kkt_residual(const NlpProblem& problem, const KktPoint& point) {
  NlpSolver solver(problem);
  return solver.kkt_residual(point);
}

}  // namespace fesd
