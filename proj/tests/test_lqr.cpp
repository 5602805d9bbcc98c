#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sdoed/lqr.hpp"
#include "support/fixtures.hpp"

using namespace sdoed;

namespace {

// scalar LTI xdot = a x + b u, no model outputs
DynamicsModel scalar_lti(double a, double b) {
  DynamicsModel model;
  model.state_dim = 1;
  model.control_dim = 1;
  model.rhs = [a, b](double, const VectorXd& x, const VectorXd& u, const VectorXd&) {
    return VectorXd::Constant(1, a * x(0) + b * u(0));
  };
  model.rhs_jac_state = [a](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Constant(1, 1, a);
  };
  model.rhs_jac_control = [b](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Constant(1, 1, b);
  };
  model.rhs_jac_output = [](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Zero(1, 0);
  };
  model.control_lower = VectorXd::Constant(1, -1e30);
  model.control_upper = VectorXd::Constant(1, 1e30);
  model.state_lower = VectorXd::Constant(1, -1e30);
  model.state_upper = VectorXd::Constant(1, 1e30);
  return model;
}

OcpProblem equilibrium_problem(const DynamicsModel* model, double horizon) {
  OcpProblem p;
  p.model = model;
  p.grid = TimeGrid::build({0.0, horizon}, {4});
  p.x0 = VectorXd::Zero(1);
  return p;
}

DiscreteSolution zero_reference(const OcpProblem& p) {
  DiscreteSolution s;
  s.y = VectorXd::Zero(p.grid.node_count());
  s.z = VectorXd::Zero(p.grid.node_count());
  s.T = p.grid.domain_length();
  return s;
}

}  // namespace

TEST_CASE("long-horizon Riccati converges to the algebraic root") {
  const double a = 0.3, b = 1.2, q = 2.0, r = 0.5;
  DynamicsModel model = scalar_lti(a, b);
  OcpProblem p = equilibrium_problem(&model, 40.0);
  const DiscreteSolution ref = zero_reference(p);

  LqrWeights w;
  w.Q = MatrixXd::Constant(1, 1, q);
  w.R = MatrixXd::Constant(1, 1, r);
  w.Qf = MatrixXd::Zero(1, 1);
  const GainSchedule sched = solve_riccati(p, ref, w);

  const double p_inf = r * (a + std::sqrt(a * a + b * b * q / r)) / (b * b);
  CHECK(sched.riccati.front()(0, 0) == doctest::Approx(p_inf).epsilon(1e-6));
  CHECK(sched.gains.front()(0, 0) == doctest::Approx(b * p_inf / r).epsilon(1e-6));
}

TEST_CASE("zero weights give zero gains") {
  DynamicsModel model = scalar_lti(-0.4, 1.0);
  OcpProblem p = equilibrium_problem(&model, 5.0);
  LqrWeights w;
  w.Q = MatrixXd::Zero(1, 1);
  w.R = MatrixXd::Identity(1, 1);
  w.Qf = MatrixXd::Zero(1, 1);
  const GainSchedule sched = solve_riccati(p, zero_reference(p), w);
  for (const auto& pmat : sched.riccati) CHECK(pmat.lpNorm<Eigen::Infinity>() == 0.0);
  for (const auto& k : sched.gains) CHECK(k.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("Riccati iterates stay symmetric PSD along the Zermelo reference") {
  const testing::ZermeloFixture fx = testing::make_zermelo_fixture(0, 1e-9);
  LqrWeights w;
  w.Q = MatrixXd::Identity(2, 2);
  w.R = MatrixXd::Identity(1, 1) * 0.1;
  w.Qf = MatrixXd::Identity(2, 2);
  const GainSchedule sched = solve_riccati(fx.ocp, fx.reference, w);
  for (const auto& pmat : sched.riccati) {
    CHECK((pmat - pmat.transpose()).lpNorm<Eigen::Infinity>() <=
          1e-9 * std::max(1.0, pmat.lpNorm<Eigen::Infinity>()));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (pmat + pmat.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
  }
}

TEST_CASE("matched truth model needs no feedback") {
  // accurate reference, truth identical to the planning model
  const testing::ZermeloFixture fx = testing::make_zermelo_fixture(0, 1e-10, {8, 8, 8, 8, 8, 8, 8, 8});
  LqrWeights w;
  w.Q = MatrixXd::Identity(2, 2);
  w.R = MatrixXd::Identity(1, 1) * 0.1;
  w.Qf = MatrixXd::Identity(2, 2);
  const GainSchedule sched = solve_riccati(fx.ocp, fx.reference, w);

  const SimulationResult open = simulate_closed_loop(fx.ocp, fx.reference, *fx.model, nullptr);
  const SimulationResult closed = simulate_closed_loop(fx.ocp, fx.reference, *fx.model, &sched);
  CHECK(open.tracking_error <= 1e-10);
  CHECK(closed.tracking_error <= 1e-10);
  CHECK(open.control_effort == 0.0);
  CHECK(closed.control_effort <= 1e-10);
  for (bool v : closed.channel_violated) CHECK(!v);
}

TEST_CASE("feedback beats open loop under model error") {
  const testing::ZermeloFixture fx = testing::make_zermelo_fixture(0, 1e-9);
  // truth current differs from the planning current
  ZermeloParams truth_params;
  truth_params.current = {DictTerm{0.35, {}},
                          DictTerm{0.65, {TermFactor{0, TermFactor::Fn::SinHalfPi, 1}}},
                          DictTerm{-0.22, {TermFactor{0, TermFactor::Fn::Power, 2}}}};
  const DynamicsModel truth = make_zermelo_model(truth_params);

  LqrWeights w;
  w.Q = MatrixXd::Identity(2, 2);
  w.R = MatrixXd::Identity(1, 1) * 0.1;
  w.Qf = MatrixXd::Identity(2, 2);
  const GainSchedule sched = solve_riccati(fx.ocp, fx.reference, w);

  const SimulationResult open = simulate_closed_loop(fx.ocp, fx.reference, truth, nullptr);
  const SimulationResult closed = simulate_closed_loop(fx.ocp, fx.reference, truth, &sched);
  CHECK(open.tracking_error > 1e-6);
  CHECK(closed.tracking_error < open.tracking_error);
  CHECK(closed.control_effort > 0.0);
  CHECK(open.control_effort == 0.0);
}

TEST_CASE("stiffer control penalty never increases the applied effort (scalar LTI)") {
  DynamicsModel model = scalar_lti(0.2, 1.0);
  OcpProblem p = equilibrium_problem(&model, 6.0);
  const DiscreteSolution ref = zero_reference(p);
  const DynamicsModel truth = scalar_lti(0.35, 1.0);  // model error in a

  double prev_effort = -1.0;
  for (double r : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    LqrWeights w;
    w.Q = MatrixXd::Identity(1, 1);
    w.R = MatrixXd::Constant(1, 1, r);
    w.Qf = MatrixXd::Identity(1, 1);
    const GainSchedule sched = solve_riccati(p, ref, w);
    // nonzero initial deviation is needed for any feedback action
    OcpProblem p_dev = p;
    p_dev.x0 = VectorXd::Constant(1, 0.5);
    const SimulationResult sim = simulate_closed_loop(p_dev, ref, truth, &sched);
    if (prev_effort >= 0.0) CHECK(sim.control_effort <= prev_effort * (1.0 + 1e-9));
    prev_effort = sim.control_effort;
  }
}

TEST_CASE("Riccati blow-up is reported with the failure time") {
  DynamicsModel model = scalar_lti(5.0, 0.01);  // nearly uncontrollable unstable plant
  OcpProblem p = equilibrium_problem(&model, 20.0);
  LqrWeights w;
  w.Q = MatrixXd::Identity(1, 1) * 100.0;
  w.R = MatrixXd::Identity(1, 1) * 1e3;
  w.Qf = MatrixXd::Identity(1, 1);
  RiccatiOptions opts;
  opts.norm_cap = 1e4;
  CHECK_THROWS_AS(solve_riccati(p, zero_reference(p), w, opts), SolveError);
}

TEST_CASE("weight validation") {
  DynamicsModel model = scalar_lti(0.0, 1.0);
  OcpProblem p = equilibrium_problem(&model, 1.0);
  LqrWeights w;
  w.Q = MatrixXd::Identity(1, 1);
  w.R = MatrixXd::Zero(1, 1);  // not PD
  w.Qf = MatrixXd::Identity(1, 1);
  CHECK_THROWS_AS(solve_riccati(p, zero_reference(p), w), ContractViolation);
}
