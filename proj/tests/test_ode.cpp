#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdoed/errors.hpp"
#include "sdoed/ode.hpp"

using namespace sdoed;

TEST_CASE("harmonic oscillator stays on the circle to integrator tolerance") {
  auto f = [](double, const VectorXd& x) {
    VectorXd dx(2);
    dx << x(1), -x(0);
    return dx;
  };
  VectorXd x0(2);
  x0 << 1.0, 0.0;
  const VectorXd samples = VectorXd::LinSpaced(21, 0.0, 2.0 * M_PI);
  OdeOptions opts;
  opts.rel_tol = 1e-10;
  opts.abs_tol = 1e-12;
  const OdeSolution sol = integrate_ode(f, x0, samples, opts);
  for (int i = 0; i < samples.size(); ++i) {
    CHECK(sol.states(i, 0) == doctest::Approx(std::cos(samples(i))).epsilon(1e-8));
    CHECK(sol.states(i, 1) == doctest::Approx(-std::sin(samples(i))).epsilon(1e-8));
  }
}

TEST_CASE("backward integration reverses the flow") {
  auto f = [](double t, const VectorXd& x) {
    VectorXd dx(1);
    dx << -0.7 * x(0) + std::sin(3.0 * t);
    return dx;
  };
  VectorXd x0(1);
  x0 << 2.0;
  const VectorXd fwd_samples = VectorXd::LinSpaced(11, 0.0, 1.5);
  const OdeSolution fwd = integrate_ode(f, x0, fwd_samples);
  VectorXd xT(1);
  xT << fwd.states(10, 0);
  const VectorXd bwd_samples = VectorXd::LinSpaced(11, 1.5, 0.0);
  const OdeSolution bwd = integrate_ode(f, xT, bwd_samples);
  CHECK(bwd.states(10, 0) == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("quadrature states accumulate integrals to tolerance") {
  // xdot = 1, qdot = x^2 from 0: q(t) = t^3/3
  auto f = [](double, const VectorXd& x) {
    VectorXd dx(2);
    dx << 1.0, x(0) * x(0);
    return dx;
  };
  VectorXd x0 = VectorXd::Zero(2);
  VectorXd samples(2);
  samples << 0.0, 2.0;
  const OdeSolution sol = integrate_ode(f, x0, samples);
  CHECK(sol.states(1, 1) == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("non-finite dynamics raise a solver error with the failure time") {
  auto f = [](double t, const VectorXd& x) {
    VectorXd dx(1);
    dx << (t > 0.5 ? std::numeric_limits<double>::quiet_NaN() : x(0));
    return dx;
  };
  VectorXd x0 = VectorXd::Ones(1);
  VectorXd samples(2);
  samples << 0.0, 1.0;
  CHECK_THROWS_AS(integrate_ode(f, x0, samples), SolveError);
}
