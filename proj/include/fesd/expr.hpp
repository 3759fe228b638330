// Scalar expression DAGs with exact first and second derivatives.
//
// Graphs are append-only while being built and immutable afterwards; they can
// then be shared freely across threads. Evaluation state lives in a
// per-caller EvalWorkspace, so concurrent evaluations of one graph are safe.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fesd {

enum class Op : std::uint8_t {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kSqrt,
  kExp,
  kLog,
  kSin,
  kCos,
  kMax,
  // Heaviside gate (x >= 0 -> 1, else 0). Not part of the public builder
  // vocabulary; only emitted when differentiating kMax, where the tie value
  // Step(0) = 1 selects the first argument's derivative.
  kStep,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kVar: return "var";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kPow: return "pow";
    case Op::kSqrt: return "sqrt";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kMax: return "max";
    case Op::kStep: return "step";
  }
  return "?";
}

struct Node {
  Op op;
  std::uint32_t a = 0;  // first child, or variable index for kVar
  std::uint32_t b = 0;  // second child (binary ops only)
  double value = 0.0;   // payload for kConst
};

// Domain violation hit while evaluating (log of a nonpositive value, division
// by zero, overflow to infinity, ...).
struct EvalError {
  std::uint32_t node = 0;
  Op op = Op::kConst;
  std::string message;
};

class EvalDomainError : public std::runtime_error {
 public:
  explicit EvalDomainError(const EvalError& e)
      : std::runtime_error("evaluation error at node " + std::to_string(e.node) + " (" +
                           op_name(e.op) + "): " + e.message),
        error(e) {}
  EvalError error;
};

// Per-caller evaluation scratch. Reusable across calls; never shared between
// threads.
struct EvalWorkspace {
  std::vector<double> values;
  std::optional<EvalError> error;
};

class ExprGraph;

// Value-semantic handle used while building expressions on a graph.
class Expr {
 public:
  Expr() = default;

  std::uint32_t id() const { return id_; }
  ExprGraph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class ExprGraph;
  Expr(ExprGraph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  ExprGraph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class ExprGraph {
 public:
  ExprGraph() = default;

  explicit ExprGraph(std::vector<std::string> variables) { reset_variables(std::move(variables)); }

  // -- construction ---------------------------------------------------------

  Expr constant(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("ExprGraph: non-finite constant");
    return Expr(this, make(Op::kConst, 0, 0, v));
  }

  Expr var(std::size_t index) {
    if (index >= var_nodes_.size()) throw std::out_of_range("ExprGraph: variable index");
    return Expr(this, var_nodes_[index]);
  }

  Expr var(std::string_view name) {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      if (variables_[i] == name) return var(i);
    }
    throw std::out_of_range("ExprGraph: unknown variable '" + std::string(name) + "'");
  }

  // Wraps an existing node id as a builder handle.
  Expr expr(std::uint32_t node_id) {
    if (node_id >= nodes_.size()) throw std::out_of_range("ExprGraph: node id");
    return Expr(this, node_id);
  }

  // Appends a new variable (used for weight symbols and solver parameters).
  std::size_t add_variable(std::string name) {
    variables_.push_back(std::move(name));
    var_nodes_.push_back(push_node({Op::kVar, static_cast<std::uint32_t>(variables_.size() - 1), 0, 0.0}));
    return variables_.size() - 1;
  }

  Expr binary(Op op, Expr a, Expr b) {
    check_owned(a);
    check_owned(b);
    return Expr(this, make(op, a.id(), b.id(), 0.0));
  }

  Expr unary(Op op, Expr a) {
    check_owned(a);
    return Expr(this, make(op, a.id(), 0, 0.0));
  }

  std::size_t add_output(Expr e) {
    check_owned(e);
    outputs_.push_back(e.id());
    return outputs_.size() - 1;
  }

  std::size_t add_output(std::uint32_t node_id) {
    if (node_id >= nodes_.size()) throw std::out_of_range("ExprGraph: output node id");
    outputs_.push_back(node_id);
    return outputs_.size() - 1;
  }

  // -- inspection -----------------------------------------------------------

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_outputs() const { return outputs_.size(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<std::string>& variable_names() const { return variables_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  const std::vector<std::uint32_t>& outputs() const { return outputs_; }
  std::uint32_t variable_node(std::size_t index) const { return var_nodes_[index]; }

  bool is_constant(std::uint32_t id) const { return nodes_[id].op == Op::kConst; }
  bool is_zero(std::uint32_t id) const {
    return nodes_[id].op == Op::kConst && nodes_[id].value == 0.0;
  }

  // -- evaluation -----------------------------------------------------------

  // Evaluates nodes [0, limit). Returns false and sets ws.error on a domain
  // violation. Node values land in ws.values.
  bool evaluate_nodes(const Eigen::VectorXd& point, EvalWorkspace& ws, std::size_t limit) const {
    if (static_cast<std::size_t>(point.size()) != variables_.size())
      throw std::invalid_argument("ExprGraph::evaluate: point length " +
                                  std::to_string(point.size()) + " != variable count " +
                                  std::to_string(variables_.size()));
    ws.error.reset();
    ws.values.resize(nodes_.size());
    double* vals = ws.values.data();
    for (std::size_t id = 0; id < limit; ++id) {
      const Node& n = nodes_[id];
      double v;
      switch (n.op) {
        case Op::kConst: v = n.value; break;
        case Op::kVar: v = point[static_cast<Eigen::Index>(n.a)]; break;
        case Op::kAdd: v = vals[n.a] + vals[n.b]; break;
        case Op::kSub: v = vals[n.a] - vals[n.b]; break;
        case Op::kMul: v = vals[n.a] * vals[n.b]; break;
        case Op::kDiv: v = vals[n.a] / vals[n.b]; break;
        case Op::kPow: v = std::pow(vals[n.a], vals[n.b]); break;
        case Op::kSqrt: v = std::sqrt(vals[n.a]); break;
        case Op::kExp: v = std::exp(vals[n.a]); break;
        case Op::kLog: v = std::log(vals[n.a]); break;
        case Op::kSin: v = std::sin(vals[n.a]); break;
        case Op::kCos: v = std::cos(vals[n.a]); break;
        case Op::kMax: v = vals[n.a] >= vals[n.b] ? vals[n.a] : vals[n.b]; break;
        case Op::kStep: v = vals[n.a] >= 0.0 ? 1.0 : 0.0; break;
        default: v = std::numeric_limits<double>::quiet_NaN(); break;
      }
      if (!std::isfinite(v)) {
        ws.error = EvalError{static_cast<std::uint32_t>(id), n.op,
                             "non-finite result (operands " + operand_string(n, vals) + ")"};
        return false;
      }
      vals[id] = v;
    }
    return true;
  }

  bool evaluate(const Eigen::VectorXd& point, EvalWorkspace& ws) const {
    return evaluate_nodes(point, ws, nodes_.size());
  }

  Eigen::VectorXd output_values(const EvalWorkspace& ws) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(outputs_.size()));
    for (std::size_t i = 0; i < outputs_.size(); ++i) out[static_cast<Eigen::Index>(i)] = ws.values[outputs_[i]];
    return out;
  }

  // Convenience form; throws EvalDomainError on domain violations.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& point) const {
    EvalWorkspace ws;
    if (!evaluate(point, ws)) throw EvalDomainError(*ws.error);
    return output_values(ws);
  }

  // -- differentiation ------------------------------------------------------

  // Appends adjoint nodes for d(output)/d(var) and returns the nonzero
  // partials as (variable index, node id) pairs, ordered by variable index.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> append_gradient(std::uint32_t output) {
    if (output >= nodes_.size()) throw std::out_of_range("ExprGraph: gradient output id");
    // Reverse sweep over the output's subgraph only; adjoints are expression
    // node ids, accumulated with hash-consed Add/Sub.
    std::vector<std::uint32_t> order = subgraph_descending(output);
    std::unordered_map<std::uint32_t, std::uint32_t> adjoint;
    adjoint.emplace(output, one_node());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> partials;
    for (std::uint32_t id : order) {
      auto it = adjoint.find(id);
      if (it == adjoint.end()) continue;
      const std::uint32_t adj = it->second;
      if (is_zero(adj)) continue;
      const Node n = nodes_[id];  // copy: make() may reallocate nodes_
      switch (n.op) {
        case Op::kConst:
          break;
        case Op::kVar:
          partials.emplace_back(n.a, adj);
          break;
        case Op::kAdd:
          accumulate(adjoint, n.a, adj);
          accumulate(adjoint, n.b, adj);
          break;
        case Op::kSub:
          accumulate(adjoint, n.a, adj);
          accumulate_neg(adjoint, n.b, adj);
          break;
        case Op::kMul:
          accumulate(adjoint, n.a, make(Op::kMul, adj, n.b, 0.0));
          accumulate(adjoint, n.b, make(Op::kMul, adj, n.a, 0.0));
          break;
        case Op::kDiv:
          // y = a/b: dy/da = 1/b, dy/db = -y/b
          accumulate(adjoint, n.a, make(Op::kDiv, adj, n.b, 0.0));
          accumulate_neg(adjoint, n.b,
                         make(Op::kDiv, make(Op::kMul, adj, id, 0.0), n.b, 0.0));
          break;
        case Op::kPow:
          if (is_constant(n.b)) {
            // d(a^c) = c * a^(c-1)
            const double c = nodes_[n.b].value;
            std::uint32_t d;
            if (c == 2.0) {
              d = make(Op::kMul, make(Op::kConst, 0, 0, 2.0), n.a, 0.0);
            } else {
              d = make(Op::kMul, make(Op::kConst, 0, 0, c),
                       make(Op::kPow, n.a, make(Op::kConst, 0, 0, c - 1.0), 0.0), 0.0);
            }
            accumulate(adjoint, n.a, make(Op::kMul, adj, d, 0.0));
          } else {
            // d(a^b) = a^b * (b/a) da + a^b * log(a) db
            accumulate(adjoint, n.a,
                       make(Op::kMul, adj,
                            make(Op::kMul, id, make(Op::kDiv, n.b, n.a, 0.0), 0.0), 0.0));
            accumulate(adjoint, n.b,
                       make(Op::kMul, adj, make(Op::kMul, id, make(Op::kLog, n.a, 0, 0.0), 0.0),
                            0.0));
          }
          break;
        case Op::kSqrt:
          accumulate(adjoint, n.a,
                     make(Op::kDiv, adj,
                          make(Op::kMul, make(Op::kConst, 0, 0, 2.0), id, 0.0), 0.0));
          break;
        case Op::kExp:
          accumulate(adjoint, n.a, make(Op::kMul, adj, id, 0.0));
          break;
        case Op::kLog:
          accumulate(adjoint, n.a, make(Op::kDiv, adj, n.a, 0.0));
          break;
        case Op::kSin:
          accumulate(adjoint, n.a, make(Op::kMul, adj, make(Op::kCos, n.a, 0, 0.0), 0.0));
          break;
        case Op::kCos:
          accumulate_neg(adjoint, n.a, make(Op::kMul, adj, make(Op::kSin, n.a, 0, 0.0), 0.0));
          break;
        case Op::kMax: {
          // Subgradient: Step(a-b) is 1 at a tie, selecting the first argument.
          const std::uint32_t gate = make(Op::kStep, make(Op::kSub, n.a, n.b, 0.0), 0, 0.0);
          accumulate(adjoint, n.a, make(Op::kMul, adj, gate, 0.0));
          accumulate(adjoint, n.b,
                     make(Op::kMul, adj, make(Op::kSub, one_node(), gate, 0.0), 0.0));
          break;
        }
        case Op::kStep:
          break;  // piecewise constant
      }
    }
    // Deterministic ordering, nonzero partials only.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> result;
    result.reserve(partials.size());
    std::sort(partials.begin(), partials.end());
    for (auto& [v, node_id] : partials)
      if (!is_zero(node_id)) result.emplace_back(v, node_id);
    return result;
  }

  // Graph whose outputs are all partial derivatives d(out_i)/d(var_j),
  // row-major by output then variable.
  ExprGraph jacobian() const {
    ExprGraph g = clone_without_outputs();
    const std::size_t nv = variables_.size();
    for (std::uint32_t out : outputs_) {
      auto partials = g.append_gradient(out);
      std::size_t next = 0;
      for (std::size_t v = 0; v < nv; ++v) {
        if (next < partials.size() && partials[next].first == v) {
          g.add_output(partials[next].second);
          ++next;
        } else {
          g.add_output(g.constant(0.0));
        }
      }
    }
    return g;
  }

  // Symmetric second-derivative graph of sum_i weight_i * out_i with respect
  // to the graph's variables. The weights become trailing variables of the
  // returned graph; outputs are row-major n x n with mirrored node ids, so
  // symmetry is exact.
  ExprGraph hessian_of_weighted_sum(const std::vector<std::string>& weight_names) const {
    if (weight_names.size() != outputs_.size())
      throw std::invalid_argument("hessian_of_weighted_sum: need one weight per output");
    ExprGraph g = clone_without_outputs();
    const std::size_t nv = variables_.size();
    std::uint32_t sum = g.constant(0.0).id();
    for (std::size_t i = 0; i < outputs_.size(); ++i) {
      const std::size_t w = g.add_variable(weight_names[i]);
      sum = g.make(Op::kAdd, sum, g.make(Op::kMul, g.var_nodes_[w], outputs_[i], 0.0), 0.0);
    }
    auto grad = g.append_gradient(sum);
    std::vector<std::uint32_t> grad_nodes(nv, g.constant(0.0).id());
    for (auto& [v, node_id] : grad)
      if (v < nv) grad_nodes[v] = node_id;

    // Upper triangle, mirrored into the lower one.
    std::vector<std::uint32_t> entries(nv * nv, g.constant(0.0).id());
    for (std::size_t r = 0; r < nv; ++r) {
      auto row = g.append_gradient(grad_nodes[r]);
      for (auto& [v, node_id] : row) {
        if (v >= r && v < nv) {
          entries[r * nv + v] = node_id;
          entries[v * nv + r] = node_id;
        }
      }
    }
    for (std::uint32_t e : entries) g.add_output(e);
    return g;
  }

  // Copies this graph's nodes into `target`, splicing `substitutes[i]` (node
  // ids in target) in place of variable i. Returns the target node ids of
  // this graph's outputs. The workhorse behind instantiating model functions
  // at stage points during transcription.
  std::vector<std::uint32_t> inline_into(ExprGraph& target,
                                         const std::vector<std::uint32_t>& substitutes) const {
    if (substitutes.size() != variables_.size())
      throw std::invalid_argument("inline_into: one substitute per variable required");
    std::vector<std::uint32_t> map(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      switch (n.op) {
        case Op::kConst: map[id] = target.make(Op::kConst, 0, 0, n.value); break;
        case Op::kVar: map[id] = substitutes[n.a]; break;
        default:
          map[id] = target.make(n.op, map[n.a], binary_op(n.op) ? map[n.b] : 0, 0.0);
          break;
      }
    }
    std::vector<std::uint32_t> out;
    out.reserve(outputs_.size());
    for (std::uint32_t o : outputs_) out.push_back(map[o]);
    return out;
  }

  ExprGraph clone_without_outputs() const {
    ExprGraph g;
    g.nodes_ = nodes_;
    g.variables_ = variables_;
    g.var_nodes_ = var_nodes_;
    g.cache_ = cache_;
    return g;
  }

 private:
  friend class Expr;

  struct NodeKey {
    Op op;
    std::uint32_t a, b;
    std::uint64_t value_bits;
    bool operator==(const NodeKey&) const = default;
  };
  struct NodeKeyHash {
    std::size_t operator()(const NodeKey& k) const {
      std::uint64_t h = static_cast<std::uint64_t>(k.op);
      h = h * 0x9e3779b97f4a7c15ULL + k.a;
      h = h * 0x9e3779b97f4a7c15ULL + k.b;
      h = h * 0x9e3779b97f4a7c15ULL + k.value_bits;
      return static_cast<std::size_t>(h ^ (h >> 32));
    }
  };

  void reset_variables(std::vector<std::string> variables) {
    variables_ = std::move(variables);
    var_nodes_.clear();
    for (std::size_t i = 0; i < variables_.size(); ++i)
      var_nodes_.push_back(push_node({Op::kVar, static_cast<std::uint32_t>(i), 0, 0.0}));
  }

  void check_owned(const Expr& e) const {
    if (e.graph() != this) throw std::invalid_argument("Expr belongs to a different graph");
  }

  std::uint32_t push_node(Node n) {
    nodes_.push_back(n);
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  std::uint32_t one_node() { return make(Op::kConst, 0, 0, 1.0); }

  static std::uint64_t bits(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof(u));
    return u;
  }

  std::string operand_string(const Node& n, const double* vals) const {
    switch (n.op) {
      case Op::kConst:
      case Op::kVar: return "-";
      case Op::kSqrt:
      case Op::kExp:
      case Op::kLog:
      case Op::kSin:
      case Op::kCos:
      case Op::kStep: return std::to_string(vals[n.a]);
      default: return std::to_string(vals[n.a]) + ", " + std::to_string(vals[n.b]);
    }
  }

  void accumulate(std::unordered_map<std::uint32_t, std::uint32_t>& adjoint, std::uint32_t id,
                  std::uint32_t term) {
    if (is_zero(term)) return;
    auto it = adjoint.find(id);
    if (it == adjoint.end())
      adjoint.emplace(id, term);
    else
      it->second = make(Op::kAdd, it->second, term, 0.0);
  }

  void accumulate_neg(std::unordered_map<std::uint32_t, std::uint32_t>& adjoint, std::uint32_t id,
                      std::uint32_t term) {
    if (is_zero(term)) return;
    auto it = adjoint.find(id);
    if (it == adjoint.end())
      adjoint.emplace(id, make(Op::kSub, make(Op::kConst, 0, 0, 0.0), term, 0.0));
    else
      it->second = make(Op::kSub, it->second, term, 0.0);
  }

  // Nodes of the subgraph reachable from `root`, in descending id order
  // (children always precede parents, so this is reverse topological).
  std::vector<std::uint32_t> subgraph_descending(std::uint32_t root) const {
    std::vector<std::uint32_t> stack = {root};
    std::unordered_map<std::uint32_t, bool> seen;
    std::vector<std::uint32_t> order;
    while (!stack.empty()) {
      std::uint32_t id = stack.back();
      stack.pop_back();
      if (seen.count(id)) continue;
      seen.emplace(id, true);
      order.push_back(id);
      const Node& n = nodes_[id];
      switch (n.op) {
        case Op::kConst:
        case Op::kVar: break;
        case Op::kSqrt:
        case Op::kExp:
        case Op::kLog:
        case Op::kSin:
        case Op::kCos:
        case Op::kStep:
          stack.push_back(n.a);
          break;
        default:
          stack.push_back(n.a);
          stack.push_back(n.b);
          break;
      }
    }
    std::sort(order.begin(), order.end(), std::greater<>());
    return order;
  }

  static bool binary_op(Op op) {
    switch (op) {
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv:
      case Op::kPow:
      case Op::kMax: return true;
      default: return false;
    }
  }

  static double apply(Op op, double a, double b) {
    switch (op) {
      case Op::kAdd: return a + b;
      case Op::kSub: return a - b;
      case Op::kMul: return a * b;
      case Op::kDiv: return a / b;
      case Op::kPow: return std::pow(a, b);
      case Op::kSqrt: return std::sqrt(a);
      case Op::kExp: return std::exp(a);
      case Op::kLog: return std::log(a);
      case Op::kSin: return std::sin(a);
      case Op::kCos: return std::cos(a);
      case Op::kMax: return a >= b ? a : b;
      case Op::kStep: return a >= 0.0 ? 1.0 : 0.0;
      default: return std::numeric_limits<double>::quiet_NaN();
    }
  }

  // Hash-consed node creation with constant folding and +-0 / x1 elimination.
  std::uint32_t make(Op op, std::uint32_t a, std::uint32_t b, double value) {
    if (op != Op::kConst) {
      const bool bin = binary_op(op);
      // Constant folding (only when the folded value stays finite, so that
      // genuine domain violations still surface at evaluation time).
      if (is_constant(a) && (!bin || is_constant(b))) {
        const double v = apply(op, nodes_[a].value, bin ? nodes_[b].value : 0.0);
        if (std::isfinite(v)) return make(Op::kConst, 0, 0, v);
      }
      switch (op) {
        case Op::kAdd:
          if (is_zero(a)) return b;
          if (is_zero(b)) return a;
          break;
        case Op::kSub:
          if (is_zero(b)) return a;
          break;
        case Op::kMul:
          if (is_constant(a) && nodes_[a].value == 1.0) return b;
          if (is_constant(b) && nodes_[b].value == 1.0) return a;
          break;
        case Op::kDiv:
          if (is_constant(b) && nodes_[b].value == 1.0) return a;
          break;
        default: break;
      }
    }
    NodeKey key{op, a, b, op == Op::kConst ? bits(value) : 0};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::uint32_t id = push_node({op, a, b, value});
    cache_.emplace(key, id);
    return id;
  }

  std::vector<Node> nodes_;
  std::vector<std::string> variables_;
  std::vector<std::uint32_t> var_nodes_;
  std::vector<std::uint32_t> outputs_;
  std::unordered_map<NodeKey, std::uint32_t, NodeKeyHash> cache_;
};

// -- operator sugar for model building ---------------------------------------

inline Expr operator+(Expr a, Expr b) { return a.graph()->binary(Op::kAdd, a, b); }
inline Expr operator-(Expr a, Expr b) { return a.graph()->binary(Op::kSub, a, b); }
inline Expr operator*(Expr a, Expr b) { return a.graph()->binary(Op::kMul, a, b); }
inline Expr operator/(Expr a, Expr b) { return a.graph()->binary(Op::kDiv, a, b); }
inline Expr operator-(Expr a) { return a.graph()->constant(0.0) - a; }
inline Expr operator+(Expr a, double b) { return a + a.graph()->constant(b); }
inline Expr operator+(double a, Expr b) { return b.graph()->constant(a) + b; }
inline Expr operator-(Expr a, double b) { return a - a.graph()->constant(b); }
inline Expr operator-(double a, Expr b) { return b.graph()->constant(a) - b; }
inline Expr operator*(Expr a, double b) { return a * a.graph()->constant(b); }
inline Expr operator*(double a, Expr b) { return b.graph()->constant(a) * b; }
inline Expr operator/(Expr a, double b) { return a / a.graph()->constant(b); }
inline Expr operator/(double a, Expr b) { return b.graph()->constant(a) / b; }

inline Expr pow(Expr a, Expr b) { return a.graph()->binary(Op::kPow, a, b); }
inline Expr pow(Expr a, double b) { return pow(a, a.graph()->constant(b)); }
inline Expr sqrt(Expr a) { return a.graph()->unary(Op::kSqrt, a); }
inline Expr exp(Expr a) { return a.graph()->unary(Op::kExp, a); }
inline Expr log(Expr a) { return a.graph()->unary(Op::kLog, a); }
inline Expr sin(Expr a) { return a.graph()->unary(Op::kSin, a); }
inline Expr cos(Expr a) { return a.graph()->unary(Op::kCos, a); }
inline Expr max(Expr a, Expr b) { return a.graph()->binary(Op::kMax, a, b); }
inline Expr square(Expr a) { return a * a; }

}  // namespace fesd
