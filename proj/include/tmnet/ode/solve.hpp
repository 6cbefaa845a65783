#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tmnet/errors.hpp"
#include "tmnet/ode/integrators.hpp"
#include "tmnet/ode/problem.hpp"

namespace tmnet::ode {

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;

  std::size_t size() const noexcept { return times.size(); }
  const State& terminal() const { return states.back(); }

  /// Strictly increasing, uniformly spaced times (relative tolerance 1e-12).
  bool uniformly_spaced(double tau) const {
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double gap = times[i] - times[i - 1];
      // Absolute times carry one rounding each, hence the |t| * eps slack.
      const double slack = 1e-12 * tau + 4 * std::numeric_limits<double>::epsilon() * std::abs(times[i]);
      if (!(gap > 0.0) || std::abs(gap - tau) > slack) return false;
    }
    return states.size() == times.size();
  }
};

namespace detail {

inline void check_finite_state(const State& s, double t, std::size_t step) {
  for (double v : s)
    if (!std::isfinite(v)) throw NonFiniteState(t, step, "state component " + std::to_string(v));
}

// Shared driver. `seed_state(k)` supplies the k-th TM starting state (k = 1, 2)
// when the method is multistep.
inline Trajectory integrate_with_seed(IntegratorId method, const OdeProblem& p, double tau,
                                      std::size_t n_steps,
                                      const std::function<State(std::size_t)>& seed_state) {
  if (n_steps < 1) throw InvalidArgument("n_steps must be >= 1");
  if (is_multistep(method) && n_steps < 3)
    throw InvalidArgument("TaylorMultistep needs n_steps >= 3");
  require_step(p, p.theta0, tau);

  Trajectory tr;
  tr.times.reserve(n_steps + 1);
  tr.states.reserve(n_steps + 1);
  auto time_at = [&](std::size_t k) { return p.t0 + static_cast<double>(k) * tau; };
  tr.times.push_back(p.t0);
  tr.states.push_back(p.theta0);

  std::size_t step = 0;
  try {
    if (!is_multistep(method)) {
      for (step = 0; step < n_steps; ++step) {
        tr.states.push_back(one_step(method, p, time_at(step), tr.states.back(), tau));
        tr.times.push_back(time_at(step + 1));
        check_finite_state(tr.states.back(), tr.times.back(), step + 1);
      }
      return tr;
    }
    for (step = 0; step < 2; ++step) {
      tr.states.push_back(seed_state(step + 1));
      tr.times.push_back(time_at(step + 1));
      check_finite_state(tr.states.back(), tr.times.back(), step + 1);
    }
    for (step = 2; step < n_steps; ++step) {
      const TmHistory h{tr.states[step - 2], tr.states[step - 1], tr.states[step], time_at(step), tau};
      tr.states.push_back(tm_step(p, h));
      tr.times.push_back(time_at(step + 1));
      check_finite_state(tr.states.back(), tr.times.back(), step + 1);
    }
  } catch (const NonFiniteState& e) {
    if (e.step() != 0) throw;
    throw NonFiniteState(e.time(), step + 1, e.what());
  }
  return tr;
}

}  // namespace detail

/// Integrates n_steps uniform steps from (t0, theta0). For TaylorMultistep the
/// first two states after theta0 come from `bootstrap`; one-step methods ignore it.
inline Trajectory integrate(IntegratorId method, const OdeProblem& p, double tau, std::size_t n_steps,
                            IntegratorId bootstrap = IntegratorId::RK4Classical) {
  if (is_multistep(method) && is_multistep(bootstrap))
    throw InvalidArgument("bootstrap integrator must be a one-step method");
  State prev = p.theta0;
  std::size_t produced = 0;
  return detail::integrate_with_seed(method, p, tau, n_steps, [&](std::size_t k) {
    while (produced < k) {
      prev = one_step(bootstrap, p, p.t0 + static_cast<double>(produced) * tau, prev, tau);
      ++produced;
    }
    return prev;
  });
}

/// As integrate, but TM starting states are sampled from the exact solution.
inline Trajectory integrate_exact_start(IntegratorId method, const OdeProblem& p, double tau,
                                        std::size_t n_steps) {
  if (!p.exact) throw MissingExactSolution("problem '" + p.name + "' has no exact solution");
  const auto& exact = *p.exact;
  return detail::integrate_with_seed(method, p, tau, n_steps, [&](std::size_t k) {
    return exact(p.t0 + static_cast<double>(k) * tau);
  });
}

struct OrderEstimate {
  std::vector<double> taus;    // strictly decreasing
  std::vector<double> errors;  // strictly positive
  double slope = 0.0;
};

/// Least-squares slope of log(error) against log(tau).
inline double fit_loglog_slope(std::span<const double> taus, std::span<const double> errors) {
  if (taus.size() != errors.size() || taus.size() < 2)
    throw InvalidArgument("need at least two (tau, error) pairs of equal length");
  const std::size_t n = taus.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(errors[i] > 0.0)) throw DegenerateFit("error " + std::to_string(errors[i]) + " is not positive");
    mx += std::log(taus[i]);
    my += std::log(errors[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(taus[i]) - mx;
    sxy += dx * (std::log(errors[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Terminal max-norm error over a sweep of step sizes, and the fitted order.
/// TM histories are sampled from the exact solution so the slope reflects the
/// recurrence alone.
inline OrderEstimate empirical_order(IntegratorId method, const OdeProblem& p,
                                     std::span<const double> taus, double horizon) {
  if (!p.exact) throw MissingExactSolution("problem '" + p.name + "' has no exact solution");
  if (taus.size() < 4) throw InvalidArgument("need at least 4 step sizes");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");

  std::vector<double> sorted(taus.begin(), taus.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("step sizes must be distinct");

  const State target = (*p.exact)(p.t0 + horizon);
  OrderEstimate est;
  bool all_tiny = true;
  for (double tau : sorted) {
    const double ratio = horizon / tau;
    const double rounded = std::round(ratio);
    if (std::abs(rounded * tau - horizon) > 1e-12 * std::max(1.0, horizon))
      throw InvalidArgument("step size " + std::to_string(tau) + " does not divide horizon");
    const auto tr = integrate_exact_start(method, p, tau, static_cast<std::size_t>(rounded));
    const double err = detail::max_norm_diff(tr.terminal(), target);
    if (err >= 1e-14) all_tiny = false;
    est.taus.push_back(tau);
    est.errors.push_back(err);
  }
  if (all_tiny) throw DegenerateFit("all errors below 1e-14; slope undefined");
  est.slope = fit_loglog_slope(est.taus, est.errors);
  return est;
}

/// One-step error starting from exact data at time t (for TM, exact history at
/// t - 2 tau, t - tau, t), measured against exact(t + tau).
inline double local_truncation_error(IntegratorId method, const OdeProblem& p, double t, double tau) {
  if (!p.exact) throw MissingExactSolution("problem '" + p.name + "' has no exact solution");
  const auto& exact = *p.exact;
  State next;
  if (is_multistep(method)) {
    next = tm_step(p, TmHistory{exact(t - 2 * tau), exact(t - tau), exact(t), t, tau});
  } else {
    next = one_step(method, p, t, exact(t), tau);
  }
  return detail::max_norm_diff(next, exact(t + tau));
}

/// Runs the homogeneous TM recurrence from history (1, 1, 1 + perturbation).
/// Entry k of the result is |theta - 1| after k + 1 steps.
inline std::vector<double> tm_stability_probe(double perturbation, std::size_t n_steps) {
  if (!(perturbation >= 0.0) || !std::isfinite(perturbation))
    throw InvalidArgument("perturbation must be non-negative and finite");
  if (n_steps < 1) throw InvalidArgument("n_steps must be >= 1");
  double s0 = 1.0, s1 = 1.0, s2 = 1.0 + perturbation;
  std::vector<double> dev;
  dev.reserve(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double next = s2 + 0.5 * (s2 - s1) + 0.5 * (s0 - s1);
    s0 = s1;
    s1 = s2;
    s2 = next;
    dev.push_back(std::abs(s2 - 1.0));
  }
  return dev;
}

}  // namespace tmnet::ode
