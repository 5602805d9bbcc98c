#ifndef SDOED_TESTS_FIXTURES_HPP
#define SDOED_TESTS_FIXTURES_HPP

#include <memory>

#include "sdoed/models.hpp"
#include "sdoed/nlp.hpp"

namespace sdoed::testing {

// Zermelo river problem with a growing current, solved on a moderate grid.
// Owns the model so OcpProblem's pointer stays valid.
struct ZermeloFixture {
  std::unique_ptr<DynamicsModel> model;
  OcpProblem ocp;
  DiscreteSolution reference;
};

inline OcpProblem zermelo_problem(const DynamicsModel* model, const TimeGrid& grid) {
  OcpProblem p;
  p.model = model;
  p.grid = grid;
  p.x0 = VectorXd::Zero(2);
  p.cost.final_cost = [](const VectorXd& xT, const VectorXd&, double) { return -xT(0); };
  p.cost.final_grad = [](const VectorXd&, const VectorXd&, double, VectorXd& dx, VectorXd& du,
                         double& dT) {
    dx = VectorXd::Zero(2);
    du = VectorXd::Zero(1);
    dx(0) = -1.0;
    dT = 0.0;
  };
  TerminalConstraint tc;
  tc.name = "x2_final";
  tc.value = [](const VectorXd& xT, const VectorXd&, double) { return xT(1); };
  tc.gradient = [](const VectorXd&, const VectorXd&, double, VectorXd& dx, VectorXd& du,
                   double& dT) {
    dx = VectorXd::Zero(2);
    du = VectorXd::Zero(1);
    dx(1) = 1.0;
    dT = 0.0;
  };
  p.terminal.push_back(tc);
  return p;
}

inline ZermeloFixture make_zermelo_fixture(int basis_count = 12, double solve_tol = 1e-9,
                                           std::vector<int> orders = {10, 10}) {
  ZermeloFixture fx;
  ZermeloParams zp;
  zp.current = {DictTerm{0.35, {}},
                DictTerm{0.65, {TermFactor{0, TermFactor::Fn::SinHalfPi, 1}}}};
  fx.model = std::make_unique<DynamicsModel>(make_zermelo_model(zp));
  if (basis_count > 0) attach_uniform_basis_1d(*fx.model, 0, 0.0, 1.3, basis_count, 60.0);

  std::vector<double> boundaries;
  boundaries.push_back(0.0);
  for (std::size_t i = 1; i < orders.size(); ++i)
    boundaries.push_back(static_cast<double>(i) / orders.size());
  boundaries.push_back(1.0);
  fx.ocp = zermelo_problem(fx.model.get(), TimeGrid::build(boundaries, orders));
  fx.ocp.control_smoothing = 1e-3;

  VectorXd target(2);
  target << 1.0, 0.0;
  SolveOptions opts;
  opts.tol = solve_tol;
  opts.max_iterations = 400;
  fx.reference = solve_ocp(fx.ocp, initial_guess(fx.ocp, &target), opts);
  return fx;
}

}  // namespace sdoed::testing

#endif
