#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tmnet/ode/integrators.hpp"
#include "tmnet/ode/problem.hpp"
#include "tmnet/ode/solve.hpp"

using namespace tmnet::ode;

namespace {

OdeProblem scalar(std::function<double(double, double)> f) {
  return {"scalar", [f](double t, const State& y) { return State{f(t, y[0])}; }, 0.0, {1.0}, {}};
}

}  // namespace

TEST(OdeProblem, ReferenceProblemsAreSelfConsistent) {
  for (const auto& p : {problems::decay_sin(), problems::exponential(1.0), problems::exponential(-2.0),
                        problems::harmonic(), problems::polynomial({0.3, -1.0, 2.0, 0.5})}) {
    EXPECT_LT(exact_solution_consistency(p), 1e-6) << p.name;
  }
}

TEST(EulerStep, Examples) {
  EXPECT_DOUBLE_EQ(euler_step(scalar([](double, double y) { return y; }), 0.0, {1.0}, 0.1)[0], 1.1);

  const auto zero = problems::zero({3.0, -2.0});
  EXPECT_EQ(euler_step(zero, 0.0, {3.0, -2.0}, 0.5), (State{3.0, -2.0}));

  // (1 - 2 tau)^n closed form.
  const auto decay = scalar([](double, double y) { return -2.0 * y; });
  State y{1.0};
  for (int i = 0; i < 100; ++i) y = euler_step(decay, 0.01 * i, y, 0.01);
  EXPECT_NEAR(y[0], std::pow(0.98, 100), 1e-13);
  EXPECT_NEAR(y[0], 0.132620, 1e-6);
}

TEST(EulerStep, RejectsNonFiniteRhs) {
  const auto bad = scalar([](double, double) { return std::nan(""); });
  try {
    euler_step(bad, 0.25, {1.0}, 0.1);
    FAIL() << "expected NonFiniteState";
  } catch (const tmnet::NonFiniteState& e) {
    EXPECT_DOUBLE_EQ(e.time(), 0.25);
  }
}

TEST(EulerStep, RejectsBadArguments) {
  const auto p = problems::exponential(1.0);
  EXPECT_THROW(euler_step(p, 0.0, {1.0}, 0.0), tmnet::InvalidArgument);
  EXPECT_THROW(euler_step(p, 0.0, {1.0, 2.0}, 0.1), tmnet::InvalidArgument);
}

TEST(ImprovedEulerStep, Examples) {
  // k1 = 1, k2 = 1.1 -> 1 + 0.05 * 2.1
  EXPECT_NEAR(improved_euler_step(problems::exponential(1.0), 0.0, {1.0}, 0.1)[0], 1.105, 1e-15);
  const auto constant = scalar([](double, double) { return 3.0; });
  EXPECT_NEAR(improved_euler_step(constant, 0.0, {0.0}, 0.1)[0], 0.3, 1e-15);
  EXPECT_EQ(improved_euler_step(problems::zero({4.5}), 0.0, {4.5}, 0.3)[0], 4.5);
}

TEST(Rk2RalstonStep, Examples) {
  // k1 = 1, k2 = 1 + 2/3 * 0.1 -> 1 + 0.025 * (1 + 3 * k2) = 1.105
  EXPECT_NEAR(rk2_ralston_step(problems::exponential(1.0), 0.0, {1.0}, 0.1)[0], 1.105, 1e-15);
  EXPECT_EQ(rk2_ralston_step(problems::zero({-1.5}), 0.0, {-1.5}, 0.2)[0], -1.5);
  const auto square = problems::polynomial({0.0, 0.0, 1.0});
  EXPECT_NEAR(rk2_ralston_step(square, 0.0, {0.0}, 0.1)[0], 0.01, 1e-16);
}

TEST(Heun3Step, Examples) {
  EXPECT_EQ(heun3_step(problems::zero({2.0}), 0.0, {2.0}, 0.2)[0], 2.0);
  // k1 = 1, k2' = 1 + 0.1/3, k2 = 1 + (0.2/3) k2', result 1 + 0.025 (k1 + 3 k2)
  const double k2a = 1.0 + 0.1 / 3.0;
  const double k2 = 1.0 + 0.2 / 3.0 * k2a;
  const double expected = 1.0 + 0.025 * (1.0 + 3.0 * k2);
  EXPECT_NEAR(expected, 1.1051666666666666, 1e-15);
  const double got = heun3_step(problems::exponential(1.0), 0.0, {1.0}, 0.1)[0];
  EXPECT_NEAR(got, expected, 1e-15);
  EXPECT_NEAR(got, std::exp(0.1), 1e-5);
  EXPECT_NEAR(heun3_step(problems::polynomial({0, 0, 0, 1.0}), 0.0, {0.0}, 0.3)[0], 0.027, 1e-16);
}

TEST(Rk3KuttaStep, Examples) {
  EXPECT_EQ(rk3_kutta_step(problems::zero({2.0}), 0.0, {2.0}, 0.2)[0], 2.0);
  // k1 = 1, k2 = 1.05, k3 = 1 + 0.21 - 0.1 = 1.11; (0.1 / 6) * 6.31 = 0.10516...
  const double expected = 1.0 + 0.1 / 6.0 * (1.0 + 4.2 + 1.11);
  EXPECT_NEAR(expected, 1.1051666666666666, 1e-15);
  EXPECT_NEAR(rk3_kutta_step(problems::exponential(1.0), 0.0, {1.0}, 0.1)[0], expected, 1e-15);
  EXPECT_NEAR(rk3_kutta_step(problems::polynomial({0, 0, 0, 1.0}), 0.0, {0.0}, 0.3)[0], 0.027, 1e-16);
}

TEST(Rk4ClassicalStep, Examples) {
  EXPECT_EQ(rk4_classical_step(problems::zero({2.0}), 0.0, {2.0}, 0.2)[0], 2.0);
  // Truncated Taylor series of e^0.1 through tau^4 / 24.
  const double expected = 1.0 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24;
  EXPECT_NEAR(rk4_classical_step(problems::exponential(1.0), 0.0, {1.0}, 0.1)[0], expected, 1e-15);
  EXPECT_NEAR(expected, 1.1051708333333333, 1e-15);
  EXPECT_NEAR(rk4_classical_step(problems::polynomial({0, 0, 0, 0, 1.0}), 0.0, {0.0}, 0.5)[0], 0.0625,
              1e-16);
}

TEST(TmStep, Examples) {
  EXPECT_EQ(tm_step(problems::zero({1.0}), TmHistory{{1.0}, {1.0}, {1.0}, 0.0, 0.1})[0], 1.0);

  const auto unit_slope = scalar([](double, double) { return 1.0; });
  EXPECT_NEAR(tm_step(unit_slope, TmHistory{{0.8}, {0.9}, {1.0}, 1.0, 0.1})[0], 1.1, 1e-15);

  // theta = t^2 sampled at 0.1, 0.2, 0.3 -> 0.4^2
  const auto square = problems::polynomial({0.0, 0.0, 1.0});
  EXPECT_NEAR(tm_step(square, TmHistory{{0.01}, {0.04}, {0.09}, 0.3, 0.1})[0], 0.16, 1e-15);
}

TEST(TmStep, RejectsMismatchedHistory) {
  const auto p = problems::zero({1.0});
  EXPECT_THROW(tm_step(p, TmHistory{{1.0, 2.0}, {1.0}, {1.0}, 0.0, 0.1}), tmnet::HistoryShapeMismatch);
  EXPECT_THROW(tm_step(p, TmHistory{{1.0}, {1.0}, {1.0}, 0.0, -0.1}), tmnet::InvalidArgument);
}

TEST(TmStep, CoefficientIdentities) {
  using C = TmCoefficients;
  EXPECT_EQ(C::current + C::previous + C::previous2, 1.0);
  // First moment over offsets 0, -1, -2 plus the derivative weight.
  EXPECT_EQ(C::current * 0.0 + C::previous * -1.0 + C::previous2 * -2.0 + C::derivative, 1.0);
}

TEST(ConstantPreservation, EveryMethodKeepsZeroRhsStates) {
  const State s{0.1234567891234, -7.7, 1e10};
  const auto p = problems::zero(s);
  for (auto id : kAllIntegrators) {
    const auto tr = integrate(id, p, 0.37, 12);
    for (const auto& state : tr.states) {
      if (id == IntegratorId::Euler || id == IntegratorId::TaylorMultistep) {
        EXPECT_EQ(state, s) << short_name(id);
      } else {
        for (std::size_t i = 0; i < s.size(); ++i)
          EXPECT_LE(std::abs(state[i] - s[i]), 1e-15 * std::abs(s[i])) << short_name(id);
      }
    }
  }
}

TEST(Integrate, Examples) {
  const auto tr = integrate(IntegratorId::Euler, problems::zero({1.0, 2.0}), 0.1, 10);
  ASSERT_EQ(tr.size(), 11u);
  for (const auto& s : tr.states) EXPECT_EQ(s, (State{1.0, 2.0}));
  EXPECT_TRUE(tr.uniformly_spaced(0.1));

  const auto unit_slope = scalar([](double, double) { return 1.0; });
  auto lin = unit_slope;
  lin.theta0 = {0.0};
  EXPECT_NEAR(integrate(IntegratorId::TaylorMultistep, lin, 0.1, 10).terminal()[0], 1.0, 1e-14);

  const auto decay = problems::exponential(-2.0);
  const auto rk4 = integrate(IntegratorId::RK4Classical, decay, 0.05, 20);
  EXPECT_NEAR(rk4.terminal()[0], std::exp(-2.0), 1e-6);
  EXPECT_NEAR(rk4.times.back(), 1.0, 1e-15);
}

TEST(Integrate, Preconditions) {
  const auto p = problems::exponential(1.0);
  EXPECT_THROW(integrate(IntegratorId::Euler, p, 0.1, 0), tmnet::InvalidArgument);
  EXPECT_THROW(integrate(IntegratorId::TaylorMultistep, p, 0.1, 2), tmnet::InvalidArgument);
  EXPECT_THROW(integrate(IntegratorId::TaylorMultistep, p, 0.1, 5, IntegratorId::TaylorMultistep),
               tmnet::InvalidArgument);
}

TEST(Integrate, ReportsFailingStepIndex) {
  // theta' = theta^2 from theta(0) = 1 blows up at t = 1.
  OdeProblem blowup{"blowup", [](double, const State& y) { return State{y[0] * y[0]}; }, 0.0, {1.0}, {}};
  try {
    integrate(IntegratorId::Euler, blowup, 0.5, 50);
    FAIL() << "expected NonFiniteState";
  } catch (const tmnet::NonFiniteState& e) {
    EXPECT_GT(e.step(), 1u);
  }
}

TEST(Integrate, TmBootstrapIsConfigurable) {
  const auto p = problems::exponential(-1.0);
  const auto with_rk4 = integrate(IntegratorId::TaylorMultistep, p, 0.1, 10);
  const auto with_euler = integrate(IntegratorId::TaylorMultistep, p, 0.1, 10, IntegratorId::Euler);
  EXPECT_EQ(with_euler.states[1][0], euler_step(p, 0.0, {1.0}, 0.1)[0]);
  EXPECT_EQ(with_rk4.states[1][0], rk4_classical_step(p, 0.0, {1.0}, 0.1)[0]);
  EXPECT_NE(with_rk4.terminal(), with_euler.terminal());
}

TEST(Integrate, IsDeterministic) {
  const auto p = problems::harmonic();
  for (auto id : kAllIntegrators) {
    const auto a = integrate(id, p, 0.05, 40);
    const auto b = integrate(id, p, 0.05, 40);
    EXPECT_EQ(a.states, b.states);
    EXPECT_EQ(a.times, b.times);
  }
}

TEST(EmpiricalOrder, Examples) {
  const std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
  const auto p = problems::decay_sin();

  const auto euler = empirical_order(IntegratorId::Euler, p, taus, 2.0);
  EXPECT_GE(euler.slope, 0.85);
  EXPECT_LE(euler.slope, 1.15);

  const auto rk4 = empirical_order(IntegratorId::RK4Classical, p, taus, 2.0);
  EXPECT_GE(rk4.slope, 3.7);
  EXPECT_LE(rk4.slope, 4.3);

  const auto tm = empirical_order(IntegratorId::TaylorMultistep, p, taus, 2.0);
  EXPECT_GE(tm.slope, 1.8);
  EXPECT_LE(tm.slope, 2.2);
}

TEST(EmpiricalOrder, StoredSlopeMatchesStoredPairs) {
  const std::vector<double> taus{0.0125, 0.1, 0.025, 0.05};  // unsorted on purpose
  const auto est = empirical_order(IntegratorId::Heun3, problems::harmonic(), taus, 2.0);
  for (std::size_t i = 1; i < est.taus.size(); ++i) EXPECT_LT(est.taus[i], est.taus[i - 1]);
  for (double e : est.errors) EXPECT_GT(e, 0.0);

  // Independent slope: closed-form simple regression on the stored pairs.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(est.taus.size());
  for (std::size_t i = 0; i < est.taus.size(); ++i) {
    const double x = std::log(est.taus[i]), y = std::log(est.errors[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(est.slope, slope, 1e-9 * std::abs(slope));
}

TEST(EmpiricalOrder, Errors) {
  const std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
  auto no_exact = problems::decay_sin();
  no_exact.exact.reset();
  EXPECT_THROW(empirical_order(IntegratorId::Euler, no_exact, taus, 2.0), tmnet::MissingExactSolution);
  EXPECT_THROW(empirical_order(IntegratorId::Euler, problems::zero({1.0}), taus, 2.0), tmnet::DegenerateFit);
  EXPECT_THROW(empirical_order(IntegratorId::Euler, problems::decay_sin(), taus, 2.01), tmnet::InvalidArgument);
  const std::vector<double> few{0.1, 0.05, 0.025};
  EXPECT_THROW(empirical_order(IntegratorId::Euler, problems::decay_sin(), few, 2.0), tmnet::InvalidArgument);
}

TEST(OrderSeparation, TmBeatsEulerByAtLeastPointSeven) {
  const std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
  const auto p = problems::decay_sin();
  const double gap = empirical_order(IntegratorId::TaylorMultistep, p, taus, 2.0).slope -
                     empirical_order(IntegratorId::Euler, p, taus, 2.0).slope;
  EXPECT_GE(gap, 0.7);
}

TEST(LocalError, TmHalvingRatioIsNearEight) {
  const auto p = problems::exponential(1.0);
  for (double tau : {0.1, 0.05, 0.02}) {
    const double ratio =
        local_truncation_error(IntegratorId::TaylorMultistep, p, 1.0, tau) /
        local_truncation_error(IntegratorId::TaylorMultistep, p, 1.0, tau / 2);
    EXPECT_GE(ratio, 7.0) << tau;
    EXPECT_LE(ratio, 9.0) << tau;
  }
}

TEST(LocalError, TmLeadingTermMatchesTaylorRemainder) {
  // Expanding the recurrence about t_l leaves (2/3) tau^3 theta''' as the
  // leading one-step defect. For theta = e^t at t = 1 that is (2/3) tau^3 e.
  const auto p = problems::exponential(1.0);
  const double tau = 1e-3;
  const double lte = local_truncation_error(IntegratorId::TaylorMultistep, p, 1.0, tau);
  EXPECT_NEAR(lte / (2.0 / 3.0 * tau * tau * tau * std::exp(1.0)), 1.0, 1e-2);
}

TEST(PolynomialExactness, RandomCoefficients) {
  std::mt19937_64 rng(20241016);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    for (auto id : kAllIntegrators) {
      const int degree = global_order(id);
      std::vector<double> c(static_cast<std::size_t>(degree) + 1);
      for (auto& v : c) v = coef(rng);
      c[0] += 3.0;  // keep the solution away from zero so relative error is meaningful
      const auto p = problems::polynomial(c, coef(rng));
      const auto tr = integrate_exact_start(id, p, 0.1, 10);
      const double exact = (*p.exact)(tr.times.back())[0];
      EXPECT_LE(std::abs(tr.terminal()[0] - exact), 1e-12 * std::abs(exact))
          << short_name(id) << " trial " << trial;
    }
  }
}

TEST(StabilityProbe, Examples) {
  for (double d : tm_stability_probe(1e-6, 50)) EXPECT_LT(d, 1e-5);
  for (double d : tm_stability_probe(0.0, 50)) EXPECT_EQ(d, 0.0);
  const auto long_run = tm_stability_probe(1e-3, 200);
  ASSERT_EQ(long_run.size(), 200u);
  for (double d : long_run) EXPECT_LE(d, 10 * 1e-3);
}

TEST(StabilityProbe, ParasiticModesDecay) {
  // The recurrence conserves q = s2 - s1/2 + s0/2, so the iterates settle at
  // 1 + q = 1 + perturbation; what decays (like sqrt(1/2)^l) is the distance
  // to that limit.
  const double pert = 1e-3;
  const auto dev = tm_stability_probe(pert, 200);
  EXPECT_LT(std::abs(dev[199] - pert), std::abs(dev[9] - pert));
  EXPECT_LT(std::abs(dev[199] - pert), 1e-15);
  const double envelope = std::pow(std::sqrt(0.5), 60.0);
  EXPECT_LT(std::abs(dev[59] - pert), 10 * pert * envelope);
}

TEST(StabilityProbe, LiteralStep200VersusStep10) {
  // |theta_l - 1| at step 200 against step 10, steps counted from 1. The
  // iterates converge to 1 + perturbation rather than 1, and step 10 lands on
  // a trough of the decaying oscillation (0.989 * perturbation), so this
  // comparison does not hold.
  const auto dev = tm_stability_probe(1e-3, 200);
  EXPECT_NEAR(dev[9] / 1e-3, 0.9892578125, 1e-9);
  EXPECT_NEAR(dev[199] / 1e-3, 1.0, 1e-12);
}
