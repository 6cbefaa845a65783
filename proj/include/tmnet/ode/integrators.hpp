#pragma once

// Fixed-step explicit integrators: the one-step Runge-Kutta family and the
// three-state Taylor multistep (TM) recurrence
//
//   theta_{l+1} = 3/2 theta_l - theta_{l-1} + 1/2 theta_{l-2} + tau * f(t_l, theta_l)
//
// All arithmetic is double precision. Stage layouts follow the textbook forms:
// Heun improved Euler, Ralston RK2, Heun RK3, Kutta RK3, classical RK4.

#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/ode/problem.hpp"

namespace tmnet::ode {

enum class IntegratorId {
  Euler,
  ImprovedEuler,
  RK2Ralston,
  RK3Kutta,
  Heun3,
  RK4Classical,
  TaylorMultistep,
};

inline constexpr std::array<IntegratorId, 7> kAllIntegrators = {
    IntegratorId::Euler,        IntegratorId::ImprovedEuler, IntegratorId::RK2Ralston,
    IntegratorId::RK3Kutta,     IntegratorId::Heun3,         IntegratorId::RK4Classical,
    IntegratorId::TaylorMultistep,
};

/// Global convergence order (local truncation order minus one).
constexpr int global_order(IntegratorId id) noexcept {
  switch (id) {
    case IntegratorId::Euler: return 1;
    case IntegratorId::ImprovedEuler: return 2;
    case IntegratorId::RK2Ralston: return 2;
    case IntegratorId::RK3Kutta: return 3;
    case IntegratorId::Heun3: return 3;
    case IntegratorId::RK4Classical: return 4;
    case IntegratorId::TaylorMultistep: return 2;
  }
  return 0;
}

constexpr std::string_view short_name(IntegratorId id) noexcept {
  switch (id) {
    case IntegratorId::Euler: return "euler";
    case IntegratorId::ImprovedEuler: return "ie";
    case IntegratorId::RK2Ralston: return "rk2";
    case IntegratorId::RK3Kutta: return "rk3";
    case IntegratorId::Heun3: return "heun3";
    case IntegratorId::RK4Classical: return "rk4";
    case IntegratorId::TaylorMultistep: return "tm";
  }
  return "?";
}

inline std::optional<IntegratorId> parse_integrator(std::string_view name) {
  for (auto id : kAllIntegrators)
    if (short_name(id) == name) return id;
  return std::nullopt;
}

constexpr bool is_multistep(IntegratorId id) noexcept {
  return id == IntegratorId::TaylorMultistep;
}

/// Coefficients of the TM recurrence, oldest state last.
struct TmCoefficients {
  static constexpr double current = 1.5;
  static constexpr double previous = -1.0;
  static constexpr double previous2 = 0.5;
  static constexpr double derivative = 1.0;
};

/// The three-state window the TM recurrence consumes. s2 is the newest state
/// (at time t), s1 and s0 are one and two steps older.
struct TmHistory {
  State s0;
  State s1;
  State s2;
  double t = 0.0;
  double tau = 0.0;

  void validate() const {
    if (s0.size() != s1.size() || s1.size() != s2.size())
      throw HistoryShapeMismatch("TM history states have dimensions " + std::to_string(s0.size()) +
                                 ", " + std::to_string(s1.size()) + ", " +
                                 std::to_string(s2.size()));
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw InvalidArgument("TM history step size must be positive and finite");
  }
};

namespace detail {

inline void require_step(const OdeProblem& p, const State& theta, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw InvalidArgument("step size must be positive and finite");
  if (theta.size() != p.dimension())
    throw InvalidArgument("state dimension " + std::to_string(theta.size()) +
                          " does not match problem dimension " + std::to_string(p.dimension()));
}

inline State eval_rhs(const OdeProblem& p, double t, const State& theta) {
  State f = p.rhs(t, theta);
  if (f.size() != theta.size())
    throw InvalidArgument("rhs returned dimension " + std::to_string(f.size()) + ", expected " +
                          std::to_string(theta.size()));
  for (double v : f)
    if (!std::isfinite(v)) throw NonFiniteState(t, 0, "rhs of '" + p.name + "' returned " + std::to_string(v));
  return f;
}

/// theta + sum_j scale_j * k_j
inline State offset(const State& theta, std::initializer_list<std::pair<double, const State*>> terms) {
  State out = theta;
  for (const auto& [scale, k] : terms)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * (*k)[i];
  return out;
}

}  // namespace detail

inline State euler_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  return detail::offset(theta, {{tau, &k1}});
}

inline State improved_euler_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  const State k2 = detail::eval_rhs(p, t + tau, detail::offset(theta, {{tau, &k1}}));
  return detail::offset(theta, {{tau / 2, &k1}, {tau / 2, &k2}});
}

inline State rk2_ralston_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  const State k2 = detail::eval_rhs(p, t + 2 * tau / 3, detail::offset(theta, {{2 * tau / 3, &k1}}));
  return detail::offset(theta, {{tau / 4, &k1}, {3 * tau / 4, &k2}});
}

inline State heun3_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  const State k2a = detail::eval_rhs(p, t + tau / 3, detail::offset(theta, {{tau / 3, &k1}}));
  const State k2 = detail::eval_rhs(p, t + 2 * tau / 3, detail::offset(theta, {{2 * tau / 3, &k2a}}));
  return detail::offset(theta, {{tau / 4, &k1}, {3 * tau / 4, &k2}});
}

inline State rk3_kutta_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  const State k2 = detail::eval_rhs(p, t + tau / 2, detail::offset(theta, {{tau / 2, &k1}}));
  const State k3 = detail::eval_rhs(p, t + tau, detail::offset(theta, {{-tau, &k1}, {2 * tau, &k2}}));
  return detail::offset(theta, {{tau / 6, &k1}, {4 * tau / 6, &k2}, {tau / 6, &k3}});
}

inline State rk4_classical_step(const OdeProblem& p, double t, const State& theta, double tau) {
  detail::require_step(p, theta, tau);
  const State k1 = detail::eval_rhs(p, t, theta);
  const State k2 = detail::eval_rhs(p, t + tau / 2, detail::offset(theta, {{tau / 2, &k1}}));
  const State k3 = detail::eval_rhs(p, t + tau / 2, detail::offset(theta, {{tau / 2, &k2}}));
  const State k4 = detail::eval_rhs(p, t + tau, detail::offset(theta, {{tau, &k3}}));
  return detail::offset(theta, {{tau / 6, &k1}, {tau / 3, &k2}, {tau / 3, &k3}, {tau / 6, &k4}});
}

/// One TM update. Evaluated as s2 + (s2 - s1)/2 + (s0 - s1)/2 + tau*f, which
/// is algebraically 3/2 s2 - s1 + 1/2 s0 + tau*f and returns s2 bitwise when
/// the three states coincide and f vanishes.
inline State tm_step(const OdeProblem& p, const TmHistory& h) {
  h.validate();
  detail::require_step(p, h.s2, h.tau);
  const State f = detail::eval_rhs(p, h.t, h.s2);
  State out(h.s2.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = h.s2[i] + 0.5 * (h.s2[i] - h.s1[i]) + 0.5 * (h.s0[i] - h.s1[i]) +
             TmCoefficients::derivative * h.tau * f[i];
  }
  return out;
}

/// Dispatches a single step of any one-step method.
inline State one_step(IntegratorId id, const OdeProblem& p, double t, const State& theta, double tau) {
  switch (id) {
    case IntegratorId::Euler: return euler_step(p, t, theta, tau);
    case IntegratorId::ImprovedEuler: return improved_euler_step(p, t, theta, tau);
    case IntegratorId::RK2Ralston: return rk2_ralston_step(p, t, theta, tau);
    case IntegratorId::RK3Kutta: return rk3_kutta_step(p, t, theta, tau);
    case IntegratorId::Heun3: return heun3_step(p, t, theta, tau);
    case IntegratorId::RK4Classical: return rk4_classical_step(p, t, theta, tau);
    case IntegratorId::TaylorMultistep: break;
  }
  throw InvalidArgument("TaylorMultistep is not a one-step method; use tm_step");
}

}  // namespace tmnet::ode
