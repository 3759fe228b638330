// Transcription of the dynamic complementarity system into the switch-
// detecting finite-element constraint system: per-element implicit RK step
// equations, cross-complementarity between neighboring elements, and the
// Boolean-operator step-equilibration encoding that removes the spurious
// step-size freedom when no switch occurs.

#pragma once

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fesd/butcher.hpp"
#include "fesd/expr.hpp"
#include "fesd/model.hpp"

namespace fesd {

struct FesdOptions {
  bool cross_complementarity = true;
  bool step_equilibration = true;
  // Pins h_n = T_int/N_fe by equality and keeps only the pointwise
  // complementarities: the plain fixed-step RK baseline.
  bool fixed_steps = false;
  double big_m = 1e5;
  double h_min_factor = 1e-10;  // h_min = factor * T_int / N_fe
};

// Variable layout over all control intervals. Element index n and stage
// index i are 0-based; the element start state x_{n,0} aliases the previous
// element's last stage (c_ns = 1), so only the very first state is a
// distinct block.
struct FesdLayout {
  int n_intervals = 1;
  int n_fe = 0;
  int ns = 0;
  int n_x = 0;
  int n_u = 0;
  int n_c = 0;
  bool with_step_aux = true;

  static constexpr int kAuxPiC = 0;
  static constexpr int kAuxPiLam = 1;
  static constexpr int kAuxMax = 2;
  static constexpr int kAuxMu1 = 3;
  static constexpr int kAuxMu2 = 4;
  static constexpr int kAuxNu = 5;
  static constexpr int kAuxCount = 6;

  int aux_per_interval() const { return with_step_aux ? (n_fe - 1) * n_c * kAuxCount : 0; }
  int vars_per_interval() const {
    return n_u + n_fe * ns * (n_x + n_c) + n_fe + aux_per_interval();
  }
  int num_vars() const { return n_x + n_intervals * vars_per_interval(); }

  int x0() const { return 0; }
  int interval_base(int m) const { return n_x + m * vars_per_interval(); }
  int u(int m) const { return interval_base(m); }
  int x_stage(int m, int n, int i) const { return interval_base(m) + n_u + (n * ns + i) * n_x; }
  int lambda_stage(int m, int n, int i) const {
    return interval_base(m) + n_u + n_fe * ns * n_x + (n * ns + i) * n_c;
  }
  int h(int m, int n) const { return interval_base(m) + n_u + n_fe * ns * (n_x + n_c) + n; }
  // Auxiliary block for boundary b (between elements b-1 and b, b in
  // 1..n_fe-1) and constraint k; slot is one of the kAux* constants.
  int aux(int m, int b, int k, int slot) const {
    return interval_base(m) + n_u + n_fe * ns * (n_x + n_c) + n_fe +
           ((b - 1) * n_c + k) * kAuxCount + slot;
  }
  // Start state of element n (aliases the preceding last stage).
  int x_elem_start(int m, int n) const {
    if (n > 0) return x_stage(m, n - 1, ns - 1);
    return m > 0 ? x_stage(m - 1, n_fe - 1, ns - 1) : x0();
  }
};

// A complementarity pair references two rows of the inequality list; both
// sides are constrained nonnegative and their product is driven to zero by
// the relaxation homotopy.
struct ComplementarityPair {
  int a = 0;
  int b = 0;
};

// Per-boundary bookkeeping for switch extraction and post-solve audits.
struct BoundaryInfo {
  int m = 0;  // interval
  int b = 0;  // boundary between elements b-1 and b
  std::vector<std::uint32_t> sigma_c_back, sigma_c_fwd;  // node ids, one per k
  std::vector<std::uint32_t> sigma_lam_back, sigma_lam_fwd;
  std::uint32_t nu_sum = 0;  // node id of the scalar switch indicator
};

struct FesdProblem {
  std::shared_ptr<ExprGraph> graph;  // variables: decision block, then sigma
  FesdLayout layout;
  int num_vars = 0;
  int sigma_var = -1;  // graph variable index of the relaxation parameter

  std::uint32_t objective = 0;
  std::vector<std::uint32_t> equalities;
  std::vector<std::string> equality_names;
  std::vector<std::uint32_t> inequalities;
  std::vector<std::string> inequality_names;
  std::vector<ComplementarityPair> comp_pairs;
  std::vector<std::uint32_t> comp_products;  // product node per pair
  std::vector<std::uint32_t> relaxed_rows;   // sigma - a_i * b_i per pair
  std::uint32_t relaxed_aggregate = 0;       // sigma - sum of all products

  Eigen::VectorXd lb, ub, init;

  std::vector<BoundaryInfo> boundaries;
  double T_total = 0.0;
  double T_interval = 0.0;
  FesdOptions options;

  Eigen::VectorXd stage_abscissae;  // RK abscissae c_i, for stage-time recovery

  // Node ids of c_k evaluated at every stage point, ((m*n_fe + n)*ns + i)*n_c + k.
  std::vector<std::uint32_t> c_stage_nodes;
  std::uint32_t c_stage_node(int m, int n, int i, int k) const {
    const auto& L = layout;
    return c_stage_nodes[static_cast<std::size_t>(((m * L.n_fe + n) * L.ns + i) * L.n_c + k)];
  }

  // Residuals of all equality rows at a decision-vector value (sigma is
  // irrelevant for these rows but required by the graph).
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd& z) const {
    EvalWorkspace ws;
    Eigen::VectorXd p = with_sigma(z, 0.0);
    if (!graph->evaluate(p, ws)) throw EvalDomainError(*ws.error);
    Eigen::VectorXd r(static_cast<Eigen::Index>(equalities.size()));
    for (std::size_t i = 0; i < equalities.size(); ++i) r[static_cast<Eigen::Index>(i)] = ws.values[equalities[i]];
    return r;
  }

  Eigen::VectorXd inequality_values(const Eigen::VectorXd& z) const {
    EvalWorkspace ws;
    Eigen::VectorXd p = with_sigma(z, 0.0);
    if (!graph->evaluate(p, ws)) throw EvalDomainError(*ws.error);
    Eigen::VectorXd r(static_cast<Eigen::Index>(inequalities.size()));
    for (std::size_t i = 0; i < inequalities.size(); ++i) r[static_cast<Eigen::Index>(i)] = ws.values[inequalities[i]];
    return r;
  }

  Eigen::VectorXd with_sigma(const Eigen::VectorXd& z, double sigma) const {
    if (z.size() != num_vars) throw std::invalid_argument("FesdProblem: bad point size");
    Eigen::VectorXd p(num_vars + 1);
    p << z, sigma;
    return p;
  }
};

// Low-level builder: variables with bounds and initial values, equality and
// inequality rows, complementarity pairs, and the Boolean-operator blocks.
class ConstraintBuilder {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  ConstraintBuilder() : graph_(std::make_shared<ExprGraph>()) {}

  ExprGraph& graph() { return *graph_; }
  const ExprGraph& graph() const { return *graph_; }
  int num_vars() const { return num_vars_; }

  Expr new_var(const std::string& name, double lower, double upper, double start) {
    const std::size_t idx = graph_->add_variable(name);
    ++num_vars_;
    lb_.push_back(lower);
    ub_.push_back(upper);
    init_.push_back(start);
    return graph_->var(idx);
  }

  void set_init(int var, double value) { init_[static_cast<std::size_t>(var)] = value; }
  double init_value(int var) const { return init_[static_cast<std::size_t>(var)]; }
  void set_bounds(int var, double lower, double upper) {
    lb_[static_cast<std::size_t>(var)] = lower;
    ub_[static_cast<std::size_t>(var)] = upper;
  }

  void add_equality(Expr e, std::string name) {
    equalities_.push_back(e.id());
    equality_names_.push_back(std::move(name));
  }

  int add_inequality(Expr e, std::string name) {
    inequalities_.push_back(e.id());
    inequality_names_.push_back(std::move(name));
    return static_cast<int>(inequalities_.size()) - 1;
  }

  void add_pair(int a, int b) { pairs_.push_back({a, b}); }

  // z = x OR y for nonnegative x, y:  z >= x, z >= y, z <= x + y.
  Expr encode_or(Expr x, Expr y, const std::string& name) {
    Expr z = new_var(name, -kInf, kInf, 0.0);
    wire_or(z, x, y, name);
    set_init_from(z, std::max(eval_at_init(x), eval_at_init(y)));
    return z;
  }

  // m = max(x, y) through the KKT system of  min m  s.t. m >= x, m >= y:
  // multipliers mu1, mu2 >= 0 with mu1 + mu2 = 1 and complementarity
  // (m - x) mu1 = 0, (m - y) mu2 = 0.
  Expr encode_max(Expr x, Expr y, const std::string& name) {
    Expr m = new_var(name, -kInf, kInf, 0.0);
    Expr mu1 = new_var(name + ".mu1", -kInf, kInf, 0.5);
    Expr mu2 = new_var(name + ".mu2", -kInf, kInf, 0.5);
    wire_max(m, mu1, mu2, x, y, name);
    set_init_from(m, std::max(eval_at_init(x), eval_at_init(y)));
    return m;
  }

  // z = x AND y (= min(x, y) for nonnegative arguments):
  // z <= x, z <= y, z >= x + y - max(x, y).
  Expr encode_and(Expr x, Expr y, const std::string& name) {
    Expr m = encode_max(x, y, name + ".max");
    Expr z = new_var(name, -kInf, kInf, 0.0);
    wire_and(z, x, y, m, name);
    set_init_from(z, std::min(eval_at_init(x), eval_at_init(y)));
    return z;
  }

  // The wire_* forms attach the operator constraints to pre-allocated
  // variables (the assembler lays aux slots out up front).
  void wire_or(Expr z, Expr x, Expr y, const std::string& name) {
    add_inequality(z - x, name + ".ge_a");
    add_inequality(z - y, name + ".ge_b");
    add_inequality(x + y - z, name + ".le_sum");
  }

  void wire_max(Expr m, Expr mu1, Expr mu2, Expr x, Expr y, const std::string& name) {
    const int gap_x = add_inequality(m - x, name + ".gap_a");
    const int gap_y = add_inequality(m - y, name + ".gap_b");
    const int mu1_row = add_inequality(mu1, name + ".mu1_nn");
    const int mu2_row = add_inequality(mu2, name + ".mu2_nn");
    add_equality(mu1 + mu2 - 1.0, name + ".mu_sum");
    add_pair(gap_x, mu1_row);
    add_pair(gap_y, mu2_row);
  }

  void wire_and(Expr z, Expr x, Expr y, Expr m, const std::string& name) {
    add_inequality(x - z, name + ".le_a");
    add_inequality(y - z, name + ".le_b");
    add_inequality(z - (x + y - m), name + ".ge_minsum");
  }

  // Evaluates an expression at the current initialization (prefix
  // evaluation: e must precede any later-created variables it ignores).
  double eval_at_init(Expr e) {
    Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(init_.data(), num_vars_);
    if (!graph_->evaluate_nodes(p, scratch_, e.id() + 1)) return 0.0;
    return scratch_.values[e.id()];
  }

  const std::vector<std::uint32_t>& equalities() const { return equalities_; }
  const std::vector<std::uint32_t>& inequalities() const { return inequalities_; }
  const std::vector<ComplementarityPair>& pairs() const { return pairs_; }

  void move_into(FesdProblem& p) {
    p.graph = graph_;
    p.num_vars = num_vars_;
    p.equalities = std::move(equalities_);
    p.equality_names = std::move(equality_names_);
    p.inequalities = std::move(inequalities_);
    p.inequality_names = std::move(inequality_names_);
    p.comp_pairs = std::move(pairs_);
    p.lb = Eigen::Map<const Eigen::VectorXd>(lb_.data(), num_vars_);
    p.ub = Eigen::Map<const Eigen::VectorXd>(ub_.data(), num_vars_);
    p.init = Eigen::Map<const Eigen::VectorXd>(init_.data(), num_vars_);
  }

 private:
  void set_init_from(Expr var_expr, double value) {
    // var_expr is always a freshly created variable here; map node -> index.
    const Node& n = graph_->node(var_expr.id());
    if (n.op == Op::kVar) init_[n.a] = value;
  }

  std::shared_ptr<ExprGraph> graph_;
  int num_vars_ = 0;
  std::vector<double> lb_, ub_, init_;
  std::vector<std::uint32_t> equalities_;
  std::vector<std::string> equality_names_;
  std::vector<std::uint32_t> inequalities_;
  std::vector<std::string> inequality_names_;
  std::vector<ComplementarityPair> pairs_;
  EvalWorkspace scratch_;
};

// Assembles the full constraint system for N control intervals of N_fe
// finite elements each. Pure integration uses a single interval and a
// constant objective.
class FesdAssembler {
 public:
  FesdAssembler(const DcsModel& model, ButcherTableau tableau, int n_intervals, int n_fe,
                double T, FesdOptions options = {})
      : model_(model), tableau_(std::move(tableau)), options_(options) {
    if (n_fe < 2) throw std::invalid_argument("FesdAssembler: N_fe must be >= 2");
    if (n_intervals < 1) throw std::invalid_argument("FesdAssembler: N must be >= 1");
    if (T <= 0.0) throw std::invalid_argument("FesdAssembler: T must be positive");
    layout_.n_intervals = n_intervals;
    layout_.n_fe = n_fe;
    layout_.ns = tableau_.ns;
    layout_.n_x = model.n_x();
    layout_.n_u = model.n_u();
    layout_.n_c = model.n_c();
    layout_.with_step_aux = options_.step_equilibration && !options_.fixed_steps;
    T_total_ = T;
    T_int_ = T / n_intervals;
    h_init_ = T_int_ / n_fe;
    h_min_ = options_.h_min_factor * h_init_;
    create_variables();
    objective_ = builder_.graph().constant(0.0);
  }

  const FesdLayout& layout() const { return layout_; }
  ConstraintBuilder& builder() { return builder_; }
  double interval_length() const { return T_int_; }

  Expr var(int index) { return builder_.graph().var(static_cast<std::size_t>(index)); }

  // Stage equalities of element (m, n):
  //   x_{n,i} = x_{n,0} + h_n sum_j a_ij (f(x_{n,j}, u_m) + grad_c(x_{n,j}) lambda_{n,j})
  void add_rk_step(int m, int n) {
    const int ns = layout_.ns;
    const int n_x = layout_.n_x;
    std::vector<std::vector<std::uint32_t>> xdot(static_cast<std::size_t>(ns));
    for (int j = 0; j < ns; ++j) xdot[static_cast<std::size_t>(j)] = stage_derivative_nodes(m, n, j);
    Expr h = var(layout_.h(m, n));
    for (int i = 0; i < ns; ++i) {
      for (int comp = 0; comp < n_x; ++comp) {
        Expr acc = builder_.graph().constant(0.0);
        for (int j = 0; j < ns; ++j)
          acc = acc + builder_.graph().constant(tableau_.a(i, j)) *
                          builder_.graph().expr(xdot[static_cast<std::size_t>(j)][static_cast<std::size_t>(comp)]);
        Expr res = var(layout_.x_stage(m, n, i) + comp) -
                   var(layout_.x_elem_start(m, n) + comp) - h * acc;
        builder_.add_equality(res, row_name("rk", m, n, i, comp));
      }
    }
  }

  // Pointwise complementarity only (the fixed-step baseline's pairs).
  void add_pointwise_complementarity(int m) {
    for (int n = 0; n < layout_.n_fe; ++n)
      for (int i = 0; i < layout_.ns; ++i)
        for (int k = 0; k < layout_.n_c; ++k) add_comp_pair(m, n, i, n, i, k);
  }

  // Cross-complementarity: all (stage, stage) combinations within each
  // element, plus the boundary couplings with the preceding last stage.
  // Subsumes the pointwise pairs.
  void add_cross_complementarity(int m) {
    const int ns = layout_.ns;
    for (int n = 0; n < layout_.n_fe; ++n) {
      for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j)
          for (int k = 0; k < layout_.n_c; ++k) add_comp_pair(m, n, i, n, j, k);
      if (n > 0) {
        for (int j = 0; j < ns; ++j)
          for (int k = 0; k < layout_.n_c; ++k) {
            add_comp_pair(m, n - 1, ns - 1, n, j, k);  // boundary c vs next lambdas
            add_comp_pair(m, n, j, n - 1, ns - 1, k);  // next c vs boundary lambda
          }
      }
    }
  }

  // Switch indicator nu per boundary from the backward/forward stage sums of
  // c and lambda, plus the big-M bound forcing equal neighboring steps
  // whenever nu vanishes.
  void add_step_equilibration(int m) {
    for (int b = 1; b < layout_.n_fe; ++b) {
      BoundaryInfo info;
      info.m = m;
      info.b = b;
      Expr nu_sum = builder_.graph().constant(0.0);
      for (int k = 0; k < layout_.n_c; ++k) {
        Expr scb = stage_sum_c(m, b - 1, k);
        Expr scf = stage_sum_c(m, b, k);
        Expr slb = stage_sum_lambda(m, b - 1, k);
        Expr slf = stage_sum_lambda(m, b, k);
        info.sigma_c_back.push_back(scb.id());
        info.sigma_c_fwd.push_back(scf.id());
        info.sigma_lam_back.push_back(slb.id());
        info.sigma_lam_fwd.push_back(slf.id());
        const std::string tag =
            "steq[" + std::to_string(m) + "," + std::to_string(b) + "," + std::to_string(k) + "]";

        Expr pi_c = var(layout_.aux(m, b, k, FesdLayout::kAuxPiC));
        Expr pi_l = var(layout_.aux(m, b, k, FesdLayout::kAuxPiLam));
        Expr mx = var(layout_.aux(m, b, k, FesdLayout::kAuxMax));
        Expr mu1 = var(layout_.aux(m, b, k, FesdLayout::kAuxMu1));
        Expr mu2 = var(layout_.aux(m, b, k, FesdLayout::kAuxMu2));
        Expr nu = var(layout_.aux(m, b, k, FesdLayout::kAuxNu));
        builder_.wire_or(pi_c, scb, scf, tag + ".pi_c");
        builder_.wire_or(pi_l, slb, slf, tag + ".pi_lam");
        builder_.wire_max(mx, mu1, mu2, pi_c, pi_l, tag + ".max");
        builder_.wire_and(nu, pi_c, pi_l, mx, tag + ".nu");

        // Initialization consistent with the operator semantics (the argmax
        // multiplier pattern keeps every pair product at zero initially).
        const double vcb = builder_.eval_at_init(scb), vcf = builder_.eval_at_init(scf);
        const double vlb = builder_.eval_at_init(slb), vlf = builder_.eval_at_init(slf);
        const double pic = std::max(vcb, vcf), pil = std::max(vlb, vlf);
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxPiC), pic);
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxPiLam), pil);
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxMax), std::max(pic, pil));
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxMu1), pic >= pil ? 1.0 : 0.0);
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxMu2), pic >= pil ? 0.0 : 1.0);
        builder_.set_init(layout_.aux(m, b, k, FesdLayout::kAuxNu), std::min(pic, pil));

        nu_sum = nu_sum + nu;
      }
      info.nu_sum = nu_sum.id();
      boundaries_.push_back(info);
      // -nu M <= h_{b-1} - h_b <= nu M, stated in the 1/M scaling so the row
      // gradients stay O(1).
      Expr dh_scaled = (var(layout_.h(m, b - 1)) - var(layout_.h(m, b))) *
                       builder_.graph().constant(1.0 / options_.big_m);
      const std::string tag = "steq[" + std::to_string(m) + "," + std::to_string(b) + "]";
      builder_.add_inequality(nu_sum - dh_scaled, tag + ".bigm_hi");
      builder_.add_inequality(nu_sum + dh_scaled, tag + ".bigm_lo");
    }
  }

  void add_step_sum(int m) {
    Expr sum = builder_.graph().constant(0.0);
    for (int n = 0; n < layout_.n_fe; ++n) sum = sum + var(layout_.h(m, n));
    builder_.add_equality(sum - T_int_, "hsum[" + std::to_string(m) + "]");
  }

  void add_fixed_steps(int m) {
    for (int n = 0; n < layout_.n_fe; ++n)
      builder_.add_equality(var(layout_.h(m, n)) - h_init_, idx_name("hfix", m, n));
  }

  void add_initial_state(const Eigen::VectorXd& x0) {
    if (x0.size() != layout_.n_x) throw std::invalid_argument("initial state dimension");
    for (int comp = 0; comp < layout_.n_x; ++comp) {
      builder_.add_equality(var(layout_.x0() + comp) - x0[comp],
                            "x0[" + std::to_string(comp) + "]");
      builder_.set_init(layout_.x0() + comp, x0[comp]);
    }
    for (int m = 0; m < layout_.n_intervals; ++m)
      for (int n = 0; n < layout_.n_fe; ++n)
        for (int i = 0; i < layout_.ns; ++i)
          for (int comp = 0; comp < layout_.n_x; ++comp)
            builder_.set_init(layout_.x_stage(m, n, i) + comp, x0[comp]);
  }

  // Lagrange term L(x, u), integrated with the RK quadrature weights b_j h_n.
  void add_lagrange_cost(const ExprGraph& lagrange) {
    check_xu_graph(lagrange, "Lagrange term");
    if (lagrange.num_outputs() != 1)
      throw std::invalid_argument("Lagrange term must be scalar");
    for (int m = 0; m < layout_.n_intervals; ++m) {
      for (int n = 0; n < layout_.n_fe; ++n) {
        Expr quad = builder_.graph().constant(0.0);
        for (int j = 0; j < layout_.ns; ++j) {
          auto nodes = lagrange.inline_into(builder_.graph(), xu_substitutes(m, n, j));
          quad = quad + builder_.graph().constant(tableau_.b[j]) * builder_.graph().expr(nodes[0]);
        }
        objective_ = objective_ + var(layout_.h(m, n)) * quad;
      }
    }
  }

  void add_mayer_cost(const ExprGraph& mayer) {
    if (static_cast<int>(mayer.num_variables()) != layout_.n_x || mayer.num_outputs() != 1)
      throw std::invalid_argument("Mayer term must map the state to a scalar");
    auto nodes = mayer.inline_into(builder_.graph(), final_state_substitutes());
    objective_ = objective_ + builder_.graph().expr(nodes[0]);
  }

  // Path constraints g(x, u) >= 0, imposed at every stage point.
  void add_path_constraints(const ExprGraph& g) {
    check_xu_graph(g, "path constraint");
    for (int m = 0; m < layout_.n_intervals; ++m)
      for (int n = 0; n < layout_.n_fe; ++n)
        for (int i = 0; i < layout_.ns; ++i) {
          auto nodes = g.inline_into(builder_.graph(), xu_substitutes(m, n, i));
          for (std::size_t r = 0; r < nodes.size(); ++r)
            builder_.add_inequality(
                builder_.graph().expr(nodes[r]),
                "path[" + std::to_string(m) + "," + std::to_string(n) + "," + std::to_string(i) +
                    "," + std::to_string(r) + "]");
        }
  }

  // Terminal constraints g(x(T)) >= 0.
  void add_terminal_constraints(const ExprGraph& g) {
    if (static_cast<int>(g.num_variables()) != layout_.n_x)
      throw std::invalid_argument("terminal constraint must be a function of the state");
    auto nodes = g.inline_into(builder_.graph(), final_state_substitutes());
    for (std::size_t r = 0; r < nodes.size(); ++r)
      builder_.add_inequality(builder_.graph().expr(nodes[r]),
                              "terminal[" + std::to_string(r) + "]");
  }

  void set_control_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    if (lo.size() != layout_.n_u || hi.size() != layout_.n_u)
      throw std::invalid_argument("control bound dimension");
    for (int m = 0; m < layout_.n_intervals; ++m)
      for (int c = 0; c < layout_.n_u; ++c) builder_.set_bounds(layout_.u(m) + c, lo[c], hi[c]);
  }

  // Runs the standard assembly for all intervals and freezes the problem.
  FesdProblem assemble(const Eigen::VectorXd& x0) {
    add_initial_state(x0);
    for (int m = 0; m < layout_.n_intervals; ++m) {
      for (int n = 0; n < layout_.n_fe; ++n) add_rk_step(m, n);
      if (options_.fixed_steps) {
        add_fixed_steps(m);
        add_pointwise_complementarity(m);
      } else {
        add_step_sum(m);
        if (options_.cross_complementarity)
          add_cross_complementarity(m);
        else
          add_pointwise_complementarity(m);
        if (options_.step_equilibration) add_step_equilibration(m);
      }
    }
    return finish();
  }

  // Freezes the problem without the standard per-interval assembly (used by
  // tests that exercise individual blocks).
  FesdProblem finish() {
    FesdProblem p;
    p.layout = layout_;
    p.options = options_;
    p.T_total = T_total_;
    p.T_interval = T_int_;
    p.boundaries = std::move(boundaries_);
    p.objective = objective_.id();
    p.stage_abscissae = tableau_.c;
    for (int m = 0; m < layout_.n_intervals; ++m)
      for (int n = 0; n < layout_.n_fe; ++n)
        for (int i = 0; i < layout_.ns; ++i) {
          c_rows(m, n, i);  // ensure the cache rows exist
          const auto& nodes = c_nodes_[std::make_tuple(m, n, i)];
          p.c_stage_nodes.insert(p.c_stage_nodes.end(), nodes.begin(), nodes.end());
        }
    builder_.move_into(p);
    // Relaxation scaffolding: parameter sigma and the product rows, built
    // here so one compiled solver serves every homotopy stage.
    ExprGraph& g = *p.graph;
    p.sigma_var = static_cast<int>(g.add_variable("sigma"));
    Expr sigma = g.var(static_cast<std::size_t>(p.sigma_var));
    Expr total = g.constant(0.0);
    for (const auto& pair : p.comp_pairs) {
      Expr prod = g.expr(p.inequalities[static_cast<std::size_t>(pair.a)]) *
                  g.expr(p.inequalities[static_cast<std::size_t>(pair.b)]);
      p.comp_products.push_back(prod.id());
      p.relaxed_rows.push_back((sigma - prod).id());
      total = total + prod;
    }
    p.relaxed_aggregate = (sigma - total).id();
    return p;
  }

 private:
  void create_variables() {
    const auto& L = layout_;
    for (int c = 0; c < L.n_x; ++c)
      builder_.new_var("x0[" + std::to_string(c) + "]", -ConstraintBuilder::kInf,
                       ConstraintBuilder::kInf, 0.0);
    for (int m = 0; m < L.n_intervals; ++m) {
      for (int c = 0; c < L.n_u; ++c)
        builder_.new_var(idx_name("u", m, c), -ConstraintBuilder::kInf, ConstraintBuilder::kInf,
                         0.0);
      for (int n = 0; n < L.n_fe; ++n)
        for (int i = 0; i < L.ns; ++i)
          for (int c = 0; c < L.n_x; ++c)
            builder_.new_var(row_name("x", m, n, i, c), -ConstraintBuilder::kInf,
                             ConstraintBuilder::kInf, 0.0);
      for (int n = 0; n < L.n_fe; ++n)
        for (int i = 0; i < L.ns; ++i)
          for (int k = 0; k < L.n_c; ++k)
            builder_.new_var(row_name("lam", m, n, i, k), -ConstraintBuilder::kInf,
                             ConstraintBuilder::kInf, 0.0);
      for (int n = 0; n < L.n_fe; ++n) {
        if (options_.fixed_steps)
          builder_.new_var(idx_name("h", m, n), -ConstraintBuilder::kInf, ConstraintBuilder::kInf,
                           h_init_);
        else
          builder_.new_var(idx_name("h", m, n), h_min_, T_int_, h_init_);
      }
      if (L.with_step_aux) {
        static const char* kSlotNames[FesdLayout::kAuxCount] = {"pi_c", "pi_lam", "max",
                                                                "mu1",  "mu2",    "nu"};
        for (int b = 1; b < L.n_fe; ++b)
          for (int k = 0; k < L.n_c; ++k)
            for (int s = 0; s < FesdLayout::kAuxCount; ++s) {
              // All aux quantities are nonnegative at exact complementarity
              // and the max multipliers live in [0,1]; stating that as box
              // bounds removes the floppy directions of the relaxed NLPs
              // without changing the solution set.
              const bool is_mu = s == FesdLayout::kAuxMu1 || s == FesdLayout::kAuxMu2;
              builder_.new_var("aux[" + std::to_string(m) + "," + std::to_string(b) + "," +
                                   std::to_string(k) + "]." + kSlotNames[s],
                               0.0, is_mu ? 1.0 : ConstraintBuilder::kInf, is_mu ? 0.5 : 0.0);
            }
      }
    }
    if (builder_.num_vars() != L.num_vars())
      throw std::logic_error("FesdAssembler: layout variable count mismatch");
  }

  std::vector<std::uint32_t> x_substitutes(int m, int n, int i) const {
    std::vector<std::uint32_t> subs(static_cast<std::size_t>(layout_.n_x));
    const int base = layout_.x_stage(m, n, i);
    const ExprGraph& g = *graph_const();
    for (int c = 0; c < layout_.n_x; ++c)
      subs[static_cast<std::size_t>(c)] = g.variable_node(static_cast<std::size_t>(base + c));
    return subs;
  }

  std::vector<std::uint32_t> xu_substitutes(int m, int n, int i) const {
    std::vector<std::uint32_t> subs = x_substitutes(m, n, i);
    const ExprGraph& g = *graph_const();
    for (int c = 0; c < layout_.n_u; ++c)
      subs.push_back(g.variable_node(static_cast<std::size_t>(layout_.u(m) + c)));
    return subs;
  }

  std::vector<std::uint32_t> final_state_substitutes() const {
    return x_substitutes(layout_.n_intervals - 1, layout_.n_fe - 1, layout_.ns - 1);
  }

  const ExprGraph* graph_const() const { return &builder_.graph(); }

  // f(x_{n,j}, u) + grad_c(x_{n,j}) lambda_{n,j}, one node per component.
  std::vector<std::uint32_t> stage_derivative_nodes(int m, int n, int j) {
    ExprGraph& g = builder_.graph();
    auto f_nodes = model_.f_graph().inline_into(g, xu_substitutes(m, n, j));
    auto jac_nodes = model_.jac_c_graph().inline_into(g, x_substitutes(m, n, j));
    std::vector<std::uint32_t> xdot(static_cast<std::size_t>(layout_.n_x));
    for (int comp = 0; comp < layout_.n_x; ++comp) {
      Expr acc = g.expr(f_nodes[static_cast<std::size_t>(comp)]);
      for (int k = 0; k < layout_.n_c; ++k) {
        // jacobian rows are (constraint k, state j) row-major
        Expr gk = g.expr(jac_nodes[static_cast<std::size_t>(k * layout_.n_x + comp)]);
        acc = acc + gk * var(layout_.lambda_stage(m, n, j) + k);
      }
      xdot[static_cast<std::size_t>(comp)] = acc.id();
    }
    return xdot;
  }

  // c_k at every stage point becomes an inequality row exactly once.
  const std::vector<int>& c_rows(int m, int n, int i) {
    const auto key = std::make_tuple(m, n, i);
    auto it = c_rows_.find(key);
    if (it != c_rows_.end()) return it->second;
    ExprGraph& g = builder_.graph();
    auto nodes = model_.c_graph().inline_into(g, x_substitutes(m, n, i));
    std::vector<int> rows;
    for (int k = 0; k < layout_.n_c; ++k) {
      rows.push_back(builder_.add_inequality(g.expr(nodes[static_cast<std::size_t>(k)]),
                                             row_name("c", m, n, i, k)));
    }
    c_nodes_[key] = nodes;
    return c_rows_.emplace(key, std::move(rows)).first->second;
  }

  const std::vector<int>& lambda_rows(int m, int n, int i) {
    const auto key = std::make_tuple(m, n, i);
    auto it = lam_rows_.find(key);
    if (it != lam_rows_.end()) return it->second;
    std::vector<int> rows;
    for (int k = 0; k < layout_.n_c; ++k)
      rows.push_back(builder_.add_inequality(var(layout_.lambda_stage(m, n, i) + k),
                                             row_name("lam", m, n, i, k)));
    return lam_rows_.emplace(key, std::move(rows)).first->second;
  }

  // Pair (c_k at state stage point, lambda_k at multiplier stage point),
  // deduplicated.
  void add_comp_pair(int m, int n_state, int i_state, int n_lam, int i_lam, int k) {
    const auto key = std::make_tuple(m, n_state, i_state, n_lam, i_lam, k);
    if (!pair_seen_.insert(key).second) return;
    const int c_row = c_rows(m, n_state, i_state)[static_cast<std::size_t>(k)];
    const int l_row = lambda_rows(m, n_lam, i_lam)[static_cast<std::size_t>(k)];
    builder_.add_pair(c_row, l_row);
  }

  Expr stage_sum_c(int m, int n, int k) {
    ExprGraph& g = builder_.graph();
    Expr sum = g.constant(0.0);
    for (int i = 0; i < layout_.ns; ++i) {
      c_rows(m, n, i);  // ensure cached c nodes exist
      sum = sum + g.expr(c_nodes_[std::make_tuple(m, n, i)][static_cast<std::size_t>(k)]);
    }
    return sum;
  }

  Expr stage_sum_lambda(int m, int n, int k) {
    Expr sum = builder_.graph().constant(0.0);
    for (int i = 0; i < layout_.ns; ++i) sum = sum + var(layout_.lambda_stage(m, n, i) + k);
    return sum;
  }

  void check_xu_graph(const ExprGraph& g, const char* what) const {
    if (static_cast<int>(g.num_variables()) != layout_.n_x + layout_.n_u)
      throw std::invalid_argument(std::string(what) + ": expected a function of (x, u)");
  }

  static std::string idx_name(const char* base, int m, int j) {
    return std::string(base) + "[" + std::to_string(m) + "," + std::to_string(j) + "]";
  }
  static std::string row_name(const char* base, int m, int n, int i, int c) {
    return std::string(base) + "[" + std::to_string(m) + "," + std::to_string(n) + "," +
           std::to_string(i) + "," + std::to_string(c) + "]";
  }

  const DcsModel& model_;
  ButcherTableau tableau_;
  FesdOptions options_;
  FesdLayout layout_;
  ConstraintBuilder builder_;
  Expr objective_;
  double T_total_ = 0.0, T_int_ = 0.0, h_init_ = 0.0, h_min_ = 0.0;
  std::vector<BoundaryInfo> boundaries_;
  std::map<std::tuple<int, int, int>, std::vector<std::uint32_t>> c_nodes_;
  std::map<std::tuple<int, int, int>, std::vector<int>> c_rows_, lam_rows_;
  std::set<std::tuple<int, int, int, int, int, int>> pair_seen_;
};

// Convenience drivers matching the two standard use cases.

// Feasibility system for one control-free interval [0, T_int].
inline FesdProblem assemble_interval(const DcsModel& model, const ButcherTableau& tableau,
                                     int n_fe, double T_int, const Eigen::VectorXd& x0,
                                     FesdOptions options = {}) {
  FesdAssembler assembler(model, tableau, 1, n_fe, T_int, options);
  return assembler.assemble(x0);
}

struct OcpSpec {
  int n_intervals = 1;
  int n_fe = 2;
  double T = 1.0;
  Eigen::VectorXd x0;
  const ExprGraph* lagrange = nullptr;      // (x, u) -> scalar, optional
  const ExprGraph* mayer = nullptr;         // x -> scalar, optional
  const ExprGraph* path = nullptr;          // (x, u) -> R^k, >= 0, optional
  const ExprGraph* terminal = nullptr;      // x -> R^k, >= 0, optional
  Eigen::VectorXd control_lb, control_ub;   // empty = unbounded
};

inline FesdProblem assemble_ocp(const DcsModel& model, const ButcherTableau& tableau,
                                const OcpSpec& spec, FesdOptions options = {}) {
  FesdAssembler assembler(model, tableau, spec.n_intervals, spec.n_fe, spec.T, options);
  if (spec.control_lb.size() > 0) assembler.set_control_bounds(spec.control_lb, spec.control_ub);
  if (spec.lagrange) assembler.add_lagrange_cost(*spec.lagrange);
  if (spec.mayer) assembler.add_mayer_cost(*spec.mayer);
  if (spec.path) assembler.add_path_constraints(*spec.path);
  if (spec.terminal) assembler.add_terminal_constraints(*spec.terminal);
  return assembler.assemble(spec.x0);
}

}  // namespace fesd
