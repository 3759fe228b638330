// Relaxation homotopy for the complementarity-constrained transcription:
// each pair (a, b) becomes a >= 0, b >= 0, a*b <= sigma, and the smooth NLPs
// are solved for a geometrically shrinking sigma, warm-starting each stage
// from the last. Includes solution extraction (trajectories, switch times)
// and the post-solve audits.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fesd/nlp.hpp"
#include "fesd/transcription.hpp"

namespace fesd {

enum class RelaxationMode { kElementwise, kAggregated };

struct HomotopySchedule {
  double sigma0 = 1.0;
  double kappa = 0.1;  // reduction factor
  double sigma_min = 1e-9;
  RelaxationMode mode = RelaxationMode::kElementwise;

  void validate() const {
    if (!(kappa > 0.0 && kappa < 1.0))
      throw std::invalid_argument("HomotopySchedule: kappa must be in (0,1)");
    if (!(sigma_min > 0.0 && sigma_min < sigma0))
      throw std::invalid_argument("HomotopySchedule: need 0 < sigma_min < sigma0");
  }
};

// The relaxed smooth NLP at a fixed sigma. All structural data is shared
// with the FESD problem; only the parameter value changes along the
// homotopy, so one compiled solver serves every stage.
inline NlpProblem relax(const FesdProblem& p, double sigma,
                        RelaxationMode mode = RelaxationMode::kElementwise) {
  if (!(sigma > 0.0)) throw std::invalid_argument("relax: sigma must be positive");
  NlpProblem nlp;
  nlp.graph = p.graph;
  nlp.num_vars = p.num_vars;
  nlp.params = Eigen::VectorXd::Constant(1, sigma);
  nlp.objective = p.objective;
  nlp.equalities = p.equalities;
  nlp.inequalities = p.inequalities;
  if (mode == RelaxationMode::kElementwise) {
    nlp.inequalities.insert(nlp.inequalities.end(), p.relaxed_rows.begin(), p.relaxed_rows.end());
  } else {
    nlp.inequalities.push_back(p.relaxed_aggregate);
  }
  nlp.lb = p.lb;
  nlp.ub = p.ub;
  return nlp;
}

struct StagePoint {
  double t = 0.0;
  int interval = 0, element = 0, stage = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  double h = 0.0;  // step of the owning element
};

struct SwitchEvent {
  double time = 0.0;
  int interval = 0;
  int boundary = 0;  // between elements boundary-1 and boundary
  double nu = 0.0;
  // Per constraint k: "entering", "leaving", "none", or "ambiguous".
  std::vector<std::string> kind;
};

struct NlpRunStats {
  double sigma = 0.0;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  double kkt_residual = 0.0;
  double comp_residual = 0.0;
  double step_sum_error = 0.0;
};

struct HomotopyResult {
  bool success = false;
  KktPoint point;
  double comp_residual = 0.0;  // max_i a_i b_i, recomputed from the primal
  std::vector<StagePoint> trajectory;
  std::vector<double> element_boundaries;  // cumulative times after each element
  std::vector<SwitchEvent> switches;
  std::vector<NlpRunStats> stages;
  std::string message;

  Eigen::VectorXd terminal_state() const {
    return trajectory.empty() ? Eigen::VectorXd() : trajectory.back().x;
  }
  std::vector<double> switch_times() const {
    std::vector<double> t;
    for (const auto& s : switches) t.push_back(s.time);
    return t;
  }
};

namespace detail {

inline double max_pair_product(const FesdProblem& p, const EvalWorkspace& ws) {
  double m = 0.0;
  for (auto node : p.comp_products) m = std::max(m, ws.values[node]);
  return m;
}

inline double step_sum_error(const FesdProblem& p, const Eigen::VectorXd& z) {
  double err = 0.0;
  for (int m = 0; m < p.layout.n_intervals; ++m) {
    double sum = 0.0;
    for (int n = 0; n < p.layout.n_fe; ++n) sum += z[p.layout.h(m, n)];
    err = std::max(err, std::abs(sum - p.T_interval));
  }
  return err;
}

}  // namespace detail

// Stage trajectory, element boundary times and switch classification pulled
// out of a solved primal vector.
inline void extract_solution(const FesdProblem& p, const Eigen::VectorXd& z, double switch_tol,
                             HomotopyResult& out) {
  const FesdLayout& L = p.layout;
  EvalWorkspace ws;
  p.graph->evaluate(p.with_sigma(z, 0.0), ws);

  out.trajectory.clear();
  out.element_boundaries.clear();
  out.switches.clear();
  double t = 0.0;
  for (int m = 0; m < L.n_intervals; ++m) {
    for (int n = 0; n < L.n_fe; ++n) {
      const double h = z[L.h(m, n)];
      for (int i = 0; i < L.ns; ++i) {
        StagePoint sp;
        sp.interval = m;
        sp.element = n;
        sp.stage = i;
        sp.h = h;
        sp.x = z.segment(L.x_stage(m, n, i), L.n_x);
        sp.lambda = z.segment(L.lambda_stage(m, n, i), L.n_c);
        sp.t = t + h * p.stage_abscissae[i];  // stage i sits at fraction c_i
        out.trajectory.push_back(std::move(sp));
      }
      t += h;
      out.element_boundaries.push_back(t);
    }
  }

  // Switch detection: scalar nu per interior boundary.
  const double tol = switch_tol;
  double t_base = 0.0;
  for (int m = 0; m < L.n_intervals; ++m) {
    for (const auto& info : p.boundaries) {
      if (info.m != m) continue;
      const double nu = ws.values[info.nu_sum];
      if (nu > tol) {
        SwitchEvent ev;
        ev.interval = m;
        ev.boundary = info.b;
        ev.nu = nu;
        double tt = t_base;
        for (int n = 0; n < info.b; ++n) tt += z[L.h(m, n)];
        ev.time = tt;
        for (int k = 0; k < L.n_c; ++k) {
          const double scb = ws.values[info.sigma_c_back[static_cast<std::size_t>(k)]];
          const double scf = ws.values[info.sigma_c_fwd[static_cast<std::size_t>(k)]];
          const double slb = ws.values[info.sigma_lam_back[static_cast<std::size_t>(k)]];
          const double slf = ws.values[info.sigma_lam_fwd[static_cast<std::size_t>(k)]];
          const bool entering = scb > tol && slf > tol && scf <= tol && slb <= tol;
          const bool leaving = slb > tol && scf > tol && scb <= tol && slf <= tol;
          const bool quiet = z[L.aux(m, info.b, k, FesdLayout::kAuxNu)] <= tol;
          if (entering)
            ev.kind.push_back("entering");
          else if (leaving)
            ev.kind.push_back("leaving");
          else if (quiet)
            ev.kind.push_back("none");
          else
            ev.kind.push_back("ambiguous");
        }
        out.switches.push_back(std::move(ev));
      }
    }
    for (int n = 0; n < L.n_fe; ++n) t_base += z[L.h(m, n)];
  }
}

// Spec'd convenience: switch times of a converged result at a given
// indicator threshold.
inline std::vector<SwitchEvent> extract_switch_times(const FesdProblem& p,
                                                     const HomotopyResult& result,
                                                     double tol = -1.0) {
  if (tol < 0.0) tol = 1e-6 * p.T_interval / p.layout.n_fe;
  HomotopyResult tmp;
  extract_solution(p, result.point.primal, tol, tmp);
  return tmp.switches;
}

inline double default_switch_tol(const FesdProblem& p) {
  return 1e-6 * p.T_interval / p.layout.n_fe;
}

// Solves relax(p, sigma_j) for sigma_j = sigma0 * kappa^j, warm-starting
// each stage, until sigma_j <= sigma_min. Intermediate failures return the
// best point so far flagged as partial; a failure on the very first stage is
// a hard failure.
inline HomotopyResult homotopy_solve(const FesdProblem& p,
                                     const HomotopySchedule& schedule = {},
                                     const NlpOptions& nlp_options = {}) {
  schedule.validate();
  HomotopyResult result;
  NlpProblem nlp = relax(p, schedule.sigma0, schedule.mode);
  NlpSolver solver(nlp);

  EvalWorkspace ws;
  KktPoint current;
  bool have_solution = false;
  // sigma_j = sigma0 * kappa^j; the 2-ulp slack keeps the count exact when
  // sigma_min lies on the sequence.
  const double sigma_stop = schedule.sigma_min * (1.0 + 4e-16);
  for (int stage = 0;; ++stage) {
    const double sigma = schedule.sigma0 * std::pow(schedule.kappa, stage);
    const bool final_stage = sigma <= sigma_stop || sigma * schedule.kappa <= 0.0;
    solver.set_params(Eigen::VectorXd::Constant(1, sigma));
    NlpOptions opts = nlp_options;
    if (stage > 0) opts.mu_init = std::max(10.0 * nlp_options.tol, 0.1 * sigma);
    // Intermediate stages may stop at an acceptable residual; the final
    // stage has to meet the strict tolerance.
    if (!final_stage) opts.acceptable_tol = std::max(nlp_options.acceptable_tol, 1e-6);
    KktPoint pt = stage == 0 ? solver.solve(p.init, opts) : solver.solve_warm(current, opts);

    NlpRunStats st;
    st.sigma = sigma;
    st.status = pt.status;
    st.iterations = pt.iterations;
    st.kkt_residual = pt.residual.max();
    if (p.graph->evaluate(p.with_sigma(pt.primal, sigma), ws)) {
      st.comp_residual = detail::max_pair_product(p, ws);
      st.step_sum_error = detail::step_sum_error(p, pt.primal);
    }
    result.stages.push_back(st);

    if (pt.status != SolveStatus::kSolved) {
      if (!have_solution) {
        result.success = false;
        result.point = pt;
        result.message = "first relaxed NLP failed: " + std::string(to_string(pt.status)) +
                         (pt.message.empty() ? "" : " (" + pt.message + ")");
        return result;
      }
      result.success = false;
      result.message = "homotopy stage at sigma=" + std::to_string(sigma) +
                       " failed: " + to_string(pt.status) + "; returning best point so far";
      break;
    }
    current = pt;
    have_solution = true;
    if (final_stage) {
      result.success = true;
      break;
    }
  }

  result.point = current;
  if (p.graph->evaluate(p.with_sigma(current.primal, 0.0), ws))
    result.comp_residual = detail::max_pair_product(p, ws);
  extract_solution(p, current.primal, default_switch_tol(p), result);
  if (result.success && result.comp_residual > 10.0 * schedule.sigma_min) {
    result.success = false;
    result.message = "complementarity residual above 10*sigma_min after final stage";
  }
  return result;
}

// -- post-solve audits --------------------------------------------------------

// Switch identification (the discrete counterpart of the boundary weak-
// activity requirement): whenever constraint k is strongly active somewhere
// in element n-1 and inactive somewhere in element n (or vice versa), both
// c_k and lambda_k must vanish at the shared boundary point.
inline std::vector<std::string> audit_switch_identification(const FesdProblem& p,
                                                            const Eigen::VectorXd& z, double tol,
                                                            double tol_weak) {
  const FesdLayout& L = p.layout;
  EvalWorkspace ws;
  p.graph->evaluate(p.with_sigma(z, 0.0), ws);
  std::vector<std::string> violations;
  for (int m = 0; m < L.n_intervals; ++m) {
    for (int n = 1; n < L.n_fe; ++n) {
      for (int k = 0; k < L.n_c; ++k) {
        bool lam_back = false, c_fwd = false, c_back = false, lam_fwd = false;
        for (int i = 0; i < L.ns; ++i) {
          if (z[L.lambda_stage(m, n - 1, i) + k] > tol) lam_back = true;
          if (ws.values[p.c_stage_node(m, n, i, k)] > tol) c_fwd = true;
          if (ws.values[p.c_stage_node(m, n - 1, i, k)] > tol) c_back = true;
          if (z[L.lambda_stage(m, n, i) + k] > tol) lam_fwd = true;
        }
        const bool switching = (lam_back && c_fwd) || (c_back && lam_fwd);
        if (!switching) continue;
        const double c_b = ws.values[p.c_stage_node(m, n - 1, L.ns - 1, k)];
        const double l_b = z[L.lambda_stage(m, n - 1, L.ns - 1) + k];
        if (std::abs(c_b) > tol_weak || std::abs(l_b) > tol_weak)
          violations.push_back("boundary (" + std::to_string(m) + "," + std::to_string(n) +
                               ") k=" + std::to_string(k) + ": c=" + std::to_string(c_b) +
                               " lambda=" + std::to_string(l_b));
      }
    }
  }
  return violations;
}

// Recomputes nu from the four thresholded sigma signs and checks the sign
// pattern against the actual aux values.
inline std::vector<std::string> audit_nu_signs(const FesdProblem& p, const Eigen::VectorXd& z,
                                               double tol) {
  const FesdLayout& L = p.layout;
  EvalWorkspace ws;
  p.graph->evaluate(p.with_sigma(z, 0.0), ws);
  std::vector<std::string> violations;
  for (const auto& info : p.boundaries) {
    for (int k = 0; k < L.n_c; ++k) {
      const bool pc = ws.values[info.sigma_c_back[static_cast<std::size_t>(k)]] > tol ||
                      ws.values[info.sigma_c_fwd[static_cast<std::size_t>(k)]] > tol;
      const bool pl = ws.values[info.sigma_lam_back[static_cast<std::size_t>(k)]] > tol ||
                      ws.values[info.sigma_lam_fwd[static_cast<std::size_t>(k)]] > tol;
      const bool expect_positive = pc && pl;
      const double nu = z[L.aux(info.m, info.b, k, FesdLayout::kAuxNu)];
      if (expect_positive != (nu > tol))
        violations.push_back("boundary (" + std::to_string(info.m) + "," + std::to_string(info.b) +
                             ") k=" + std::to_string(k) + ": nu=" + std::to_string(nu) +
                             " expected " + (expect_positive ? "positive" : "zero"));
    }
  }
  return violations;
}

// nu ~ 0 must force equal neighboring steps through the big-M rows.
inline std::vector<std::string> audit_equal_steps(const FesdProblem& p, const Eigen::VectorXd& z,
                                                  double nu_tol) {
  const FesdLayout& L = p.layout;
  EvalWorkspace ws;
  p.graph->evaluate(p.with_sigma(z, 0.0), ws);
  std::vector<std::string> violations;
  for (const auto& info : p.boundaries) {
    const double nu = ws.values[info.nu_sum];
    if (nu > nu_tol) continue;
    const double dh = std::abs(z[L.h(info.m, info.b - 1)] - z[L.h(info.m, info.b)]);
    if (dh > 1e-10 * p.options.big_m)
      violations.push_back("boundary (" + std::to_string(info.m) + "," + std::to_string(info.b) +
                           "): nu=" + std::to_string(nu) + " but |dh|=" + std::to_string(dh));
  }
  return violations;
}

// Minimum of c over all stage points (feasibility margin of the trajectory).
inline double min_stage_constraint_value(const FesdProblem& p, const Eigen::VectorXd& z) {
  EvalWorkspace ws;
  p.graph->evaluate(p.with_sigma(z, 0.0), ws);
  double mn = std::numeric_limits<double>::infinity();
  for (auto node : p.c_stage_nodes) mn = std::min(mn, ws.values[node]);
  return mn;
}

}  // namespace fesd
