#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmnet/errors.hpp"

namespace tmnet::ode {

using State = std::vector<double>;
using Rhs = std::function<State(double t, const State& theta)>;
using ExactSolution = std::function<State(double t)>;

/// Initial value problem theta' = rhs(t, theta), theta(t0) = theta0.
struct OdeProblem {
  std::string name;
  Rhs rhs;
  double t0 = 0.0;
  State theta0;
  std::optional<ExactSolution> exact;

  std::size_t dimension() const noexcept { return theta0.size(); }
};

namespace detail {

inline double max_norm_diff(const State& a, const State& b) {
  if (a.size() != b.size()) throw InvalidArgument("state dimension mismatch in norm");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace detail

/// Checks that a central difference of `exact` matches rhs(t, exact(t)) at
/// `samples` points of [t0, t0 + span]. Returns the worst relative error.
inline double exact_solution_consistency(const OdeProblem& p, double span = 2.0,
                                         std::size_t samples = 16) {
  if (!p.exact) throw MissingExactSolution("problem '" + p.name + "' has no exact solution");
  const auto& exact = *p.exact;
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = p.t0 + span * (static_cast<double>(i) + 0.5) / static_cast<double>(samples);
    const State plus = exact(t + h);
    const State minus = exact(t - h);
    const State f = p.rhs(t, exact(t));
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double fd = (plus[j] - minus[j]) / (2.0 * h);
      const double scale = std::max(std::abs(f[j]), 1e-3);
      worst = std::max(worst, std::abs(fd - f[j]) / scale);
    }
  }
  return worst;
}

// Reference problems. All of them carry closed-form solutions.
namespace problems {

/// theta' = -theta + sin t, theta(0) = theta0.
inline OdeProblem decay_sin(double theta0 = 0.0) {
  const double c = theta0 + 0.5;
  return {"decay-sin",
          [](double t, const State& y) { return State{-y[0] + std::sin(t)}; },
          0.0,
          {theta0},
          [c](double t) { return State{0.5 * (std::sin(t) - std::cos(t)) + c * std::exp(-t)}; }};
}

/// theta' = lambda * theta, theta(0) = theta0.
inline OdeProblem exponential(double lambda, double theta0 = 1.0) {
  return {lambda >= 0 ? "exp-growth" : "exp-decay",
          [lambda](double, const State& y) { return State{lambda * y[0]}; },
          0.0,
          {theta0},
          [lambda, theta0](double t) { return State{theta0 * std::exp(lambda * t)}; }};
}

/// Harmonic oscillator x'' = -x as a first-order system, x(0) = 1, x'(0) = 0.
inline OdeProblem harmonic() {
  return {"harmonic",
          [](double, const State& y) { return State{y[1], -y[0]}; },
          0.0,
          {1.0, 0.0},
          [](double t) { return State{std::cos(t), -std::sin(t)}; }};
}

/// theta' = 0; every state stays at theta0.
inline OdeProblem zero(State theta0) {
  return {"zero", [](double, const State& y) { return State(y.size(), 0.0); }, 0.0,
          theta0, [theta0](double) { return theta0; }};
}

/// Time-only right-hand side whose solution is the polynomial
/// sum_k coeffs[k] * t^k. Used for exactness checks.
inline OdeProblem polynomial(std::vector<double> coeffs, double t0 = 0.0) {
  auto value = [coeffs](double t) {
    double acc = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * t + coeffs[k];
    return acc;
  };
  auto slope = [coeffs](double t) {
    double acc = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * t + static_cast<double>(k) * coeffs[k];
    return acc;
  };
  return {"polynomial", [slope](double t, const State&) { return State{slope(t)}; }, t0,
          {value(t0)}, [value](double t) { return State{value(t)}; }};
}

}  // namespace problems

}  // namespace tmnet::ode
