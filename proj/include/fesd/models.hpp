// Bundled models.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "fesd/model.hpp"

namespace fesd {

// Planar rotation field constrained to the half-plane x2 >= -1. The
// trajectory from (sqrt(2), sqrt(2)) rotates clockwise on the radius-2
// circle, slides along x2 = -1, and leaves the boundary at (0, -1); its
// terminal state at T = 11 pi/12 + sqrt(3) is exactly (-1, 0).
inline DcsModel example1_model() {
  ExprGraph f({"x1", "x2"});
  f.add_output(f.var(1));
  f.add_output(-f.var(0));
  ExprGraph c({"x1", "x2"});
  c.add_output(c.var(1) + 1.0);
  return make_dcs(std::move(f), std::move(c), "example1");
}

inline double example1_horizon() { return 11.0 * M_PI / 12.0 + std::sqrt(3.0); }

// Collaborative manipulation: two actuated discs (radius 1) push an
// unactuated disc (radius 2). States are the three disc centers, controls
// the two actuator velocities; contact is modeled by the non-overlap
// constraints |x3 - xj|^2 >= (R3 + Rj)^2.
inline DcsModel coop_discs_model() {
  const std::vector<std::string> states = {"p1x", "p1y", "p2x", "p2y", "p3x", "p3y"};
  std::vector<std::string> fvars = states;
  for (const char* u : {"u1x", "u1y", "u2x", "u2y"}) fvars.emplace_back(u);

  ExprGraph f(fvars);
  f.add_output(f.var(6));
  f.add_output(f.var(7));
  f.add_output(f.var(8));
  f.add_output(f.var(9));
  f.add_output(f.constant(0.0));
  f.add_output(f.constant(0.0));

  ExprGraph c(states);
  for (int j = 0; j < 2; ++j) {
    Expr dx = c.var(4) - c.var(2 * j);
    Expr dy = c.var(5) - c.var(2 * j + 1);
    c.add_output(dx * dx + dy * dy - 9.0);  // (R3 + Rj)^2 = 9
  }
  return make_dcs(std::move(f), std::move(c), "coop-discs");
}

inline std::optional<DcsModel> builtin_model(std::string_view name) {
  if (name == "example1") return example1_model();
  if (name == "coop-discs") return coop_discs_model();
  return std::nullopt;
}

// Default simulation horizon for a built-in model ("--T auto").
inline std::optional<double> builtin_horizon(std::string_view name) {
  if (name == "example1") return example1_horizon();
  if (name == "coop-discs") return 5.0;
  return std::nullopt;
}

}  // namespace fesd
