// Butcher tableaux for the stiffly accurate implicit RK schemes (c_ns = 1)
// that underlie the switch-detecting discretization. Only the Radau-IIA
// family is shipped; the tableau type itself is scheme-agnostic.

#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace fesd {

struct ButcherTableau {
  std::string scheme;
  int ns = 0;     // stage count
  int order = 0;  // classical accuracy order
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
};

namespace detail {
// Generated by tools/generate_radau_tableaux.py -- do not edit by hand.
inline constexpr double kRadauA1[1][1] = {
    {1.0},
};
inline constexpr double kRadauC1[1] = {1.0};

inline constexpr double kRadauA2[2][2] = {
    {0.4166666666666666666666667, -0.08333333333333333333333333},
    {0.7500000000000000000000000, 0.2500000000000000000000000},
};
inline constexpr double kRadauC2[2] = {0.3333333333333333333333333, 1.0};

inline constexpr double kRadauA3[3][3] = {
    {0.1968154772236604258683861, -0.06553542585019838810852278, 0.02377097434822015242040823},
    {0.3944243147390872769974117, 0.2920734116652284630205027, -0.04154875212599793019818601},
    {0.3764030627004672750500754, 0.5124858261884216138388134, 0.1111111111111111111111111},
};
inline constexpr double kRadauC3[3] = {0.1550510257216821901802716, 0.6449489742783178098197284,
                                       1.0};

inline constexpr double kRadauA4[4][4] = {
    {0.1129994793231561859938501, -0.04030922072352220573554989, 0.02580237742033639103594009,
     -0.009904676507266423898694112},
    {0.2343839957474002565736617, 0.2068925739353589001046451, -0.04785712804854071885000849,
     0.01604742280651627303662797},
    {0.2166817846232503418440525, 0.4061232638673733112251986, 0.1890365181700563424729334,
     -0.02418210489983293951694260},
    {0.2204622111767683752754785, 0.3881934688431718807802323, 0.3288443199800597439442892,
     0.06250000000000000000000000},
};
inline constexpr double kRadauC4[4] = {0.08858795951270394739554614, 0.4094668644407347108649263,
                                       0.7876594617608470560252419, 1.0};
}  // namespace detail

// Radau-IIA tableau with ns stages, order 2*ns - 1. b is the last row of a
// (stiff accuracy) and c_ns = 1.
inline ButcherTableau radau_iia(int ns) {
  if (ns < 1 || ns > 4)
    throw std::invalid_argument("radau_iia: ns must be in 1..4, got " + std::to_string(ns));
  ButcherTableau t;
  t.scheme = "radau-iia";
  t.ns = ns;
  t.order = 2 * ns - 1;
  t.a.resize(ns, ns);
  t.c.resize(ns);
  const double* a_flat = nullptr;
  const double* c_flat = nullptr;
  switch (ns) {
    case 1: a_flat = &detail::kRadauA1[0][0]; c_flat = detail::kRadauC1; break;
    case 2: a_flat = &detail::kRadauA2[0][0]; c_flat = detail::kRadauC2; break;
    case 3: a_flat = &detail::kRadauA3[0][0]; c_flat = detail::kRadauC3; break;
    default: a_flat = &detail::kRadauA4[0][0]; c_flat = detail::kRadauC4; break;
  }
  for (int i = 0; i < ns; ++i) {
    t.c[i] = c_flat[i];
    for (int j = 0; j < ns; ++j) t.a(i, j) = a_flat[i * ns + j];
  }
  t.b = t.a.row(ns - 1).transpose();
  return t;
}

}  // namespace fesd
