#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdoed/collocation.hpp"
#include "sdoed/errors.hpp"
#include "sdoed/models.hpp"

using namespace sdoed;

namespace {

// Test-only model: xdot = u (n = m = 1, no model outputs).
DynamicsModel integrator_model() {
  DynamicsModel model;
  model.state_dim = 1;
  model.control_dim = 1;
  model.rhs = [](double, const VectorXd&, const VectorXd& u, const VectorXd&) {
    return VectorXd::Constant(1, u(0));
  };
  model.rhs_jac_state = [](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Zero(1, 1);
  };
  model.rhs_jac_control = [](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Ones(1, 1);
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

DynamicsModel zero_model() {
  DynamicsModel model = integrator_model();
  model.rhs = [](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return VectorXd::Zero(1);
  };
  model.rhs_jac_control = [](double, const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Zero(1, 1);
  };
  return model;
}

}  // namespace

TEST_CASE("LGL rule matches analytic degree-3 values") {
  const LglRule rule = lgl_rule(3);
  CHECK(rule.nodes(0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(rule.nodes(1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(rule.nodes(2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rule.weights(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(rule.weights(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(rule.weights(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("degree-2 rule on [0,1] is the trapezoid rule") {
  const TimeGrid grid = TimeGrid::build({0.0, 1.0}, {2});
  CHECK(grid.node_count() == 2);
  CHECK(grid.nodes()(0) == 0.0);
  CHECK(grid.nodes()(1) == 1.0);
  CHECK(grid.weights()(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(grid.weights()(1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("quadrature exactness holds for degree <= 2N-3 and fails at 2N-2") {
  for (int order : {3, 4, 5, 8, 13}) {
    const TimeGrid grid = TimeGrid::build({0.0, 1.0}, {order});
    const int exact_deg = 2 * order - 3;
    for (int deg = 0; deg <= exact_deg; ++deg) {
      VectorXd vals(grid.node_count());
      for (int i = 0; i < grid.node_count(); ++i) vals(i) = std::pow(grid.nodes()(i), deg);
      const double exact = 1.0 / (deg + 1.0);
      CHECK(std::abs(grid.quadrature(vals) - exact) <= 1e-12 * std::max(1.0, exact));
    }
    // First inexact degree. The deficiency shrinks spectrally with the order,
    // so only moderate orders keep it above measurement noise.
    if (order <= 8) {
      VectorXd vals(grid.node_count());
      for (int i = 0; i < grid.node_count(); ++i)
        vals(i) = std::pow(grid.nodes()(i), exact_deg + 1);
      const double exact = 1.0 / (exact_deg + 2.0);
      CHECK(std::abs(grid.quadrature(vals) - exact) > 1e-12);
    }
  }
}

TEST_CASE("quadrature of 1 over a partitioned grid returns the domain length") {
  const TimeGrid grid = TimeGrid::build({0.0, 0.3, 1.1, 2.5}, {4, 6, 5});
  CHECK(std::abs(grid.quadrature(VectorXd::Ones(grid.node_count())) - 2.5) <= 1e-12 * 2.5);
}

TEST_CASE("interface nodes are shared") {
  const TimeGrid grid = TimeGrid::build({0.0, 0.5, 1.0}, {4, 3});
  CHECK(grid.node_count() == 6);  // 4 + 3 - 1
  CHECK(grid.interval(0).node_index.back() == grid.interval(1).node_index.front());
  // weights at the interface sum contributions from both sides
  const int iface = grid.interval(0).node_index.back();
  CHECK(grid.weights()(iface) ==
        doctest::Approx(grid.interval(0).local_weights(3) + grid.interval(1).local_weights(0)));
}

TEST_CASE("differentiation matrix rows sum to zero and differentiate exactly") {
  const TimeGrid grid = TimeGrid::build({0.0, 2.0}, {5});
  const Subinterval& sub = grid.interval(0);
  for (int i = 0; i < sub.order; ++i) CHECK(std::abs(sub.diff.row(i).sum()) <= 1e-12);

  // y sampling t^2 on a 5-node (degree-4) interval: derivative equals 2t
  VectorXd y(grid.node_count());
  for (int i = 0; i < grid.node_count(); ++i) y(i) = grid.nodes()(i) * grid.nodes()(i);
  const MatrixXd dy = grid.differentiation_apply(y, 1);
  for (int i = 0; i < sub.order; ++i)
    CHECK(dy(i, 0) == doctest::Approx(2.0 * grid.nodes()(sub.node_index[i])).epsilon(1e-12));

  // y sampling t: derivative identically one
  const MatrixXd done = grid.differentiation_apply(grid.nodes(), 1);
  for (int i = 0; i < done.rows(); ++i) CHECK(done(i, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // constant: derivative identically zero
  const MatrixXd dzero = grid.differentiation_apply(VectorXd::Ones(grid.node_count()), 1);
  for (int i = 0; i < dzero.rows(); ++i) CHECK(std::abs(dzero(i, 0)) <= 1e-12);
}

TEST_CASE("interpolation reproduces nodal values and low-degree polynomials") {
  const TimeGrid grid = TimeGrid::build({0.0, 0.4, 1.0}, {5, 6});
  const int nn = grid.node_count();

  // cubic sampled at the nodes is reproduced exactly between them
  auto cubic = [](double t) { return 1.0 - 2.0 * t + 3.0 * t * t - 0.5 * t * t * t; };
  VectorXd y(nn);
  for (int i = 0; i < nn; ++i) y(i) = cubic(grid.nodes()(i));

  for (int i = 0; i < nn; ++i)
    CHECK(grid.interpolate(y, 1, grid.nodes()(i))(0) == y(i));  // exact nodal hit

  for (double t : {0.05, 0.2, 0.33, 0.4, 0.77, 0.999}) {
    CHECK(grid.interpolate(y, 1, t)(0) == doctest::Approx(cubic(t)).epsilon(1e-12));
  }

  // interface value identical from either side by shared-coefficient construction
  const double t_iface = 0.4;
  CHECK(grid.interpolate(y, 1, t_iface)(0) == y(grid.interval(0).node_index.back()));

  CHECK_THROWS_AS(grid.interpolate(y, 1, -0.01), ContractViolation);
  CHECK_THROWS_AS(grid.interpolate(y, 1, 1.01), ContractViolation);
}

TEST_CASE("interpolate_derivative differentiates polynomials exactly") {
  const TimeGrid grid = TimeGrid::build({0.0, 1.0}, {6});
  VectorXd y(grid.node_count());
  for (int i = 0; i < grid.node_count(); ++i) {
    const double t = grid.nodes()(i);
    y(i) = t * t * t - t;
  }
  for (double t : {0.0, 0.11, 0.5, 0.93, 1.0})
    CHECK(grid.interpolate_derivative(y, 1, t)(0) ==
          doctest::Approx(3.0 * t * t - 1.0).epsilon(1e-11));
}

TEST_CASE("grid construction rejects bad input") {
  CHECK_THROWS_AS(TimeGrid::build({0.0, 0.0, 1.0}, {3, 3}), ContractViolation);
  CHECK_THROWS_AS(TimeGrid::build({1.0, 0.0}, {3}), ContractViolation);
  CHECK_THROWS_AS(TimeGrid::build({0.0, 1.0}, {1}), ContractViolation);
  CHECK_THROWS_AS(TimeGrid::build({0.0, 1.0}, {3, 3}), ContractViolation);
}

TEST_CASE("residual vanishes on an exact polynomial solution of xdot = u") {
  // x(t) = t^3 - t, u(t) = 3 t^2 - 1: compatible with a degree-5 basis
  const TimeGrid grid = TimeGrid::build({0.0, 0.6, 1.0}, {6, 6});
  const int nn = grid.node_count();
  const DynamicsModel model = integrator_model();

  VectorXd y(nn), z(nn);
  for (int i = 0; i < nn; ++i) {
    const double t = grid.nodes()(i);
    y(i) = t * t * t - t;
    z(i) = 3.0 * t * t - 1.0;
  }
  const VectorXd r = assemble_residual(grid, y, z, grid.domain_length(), model, VectorXd(),
                                       VectorXd::Zero(1));
  CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("residual is identically zero for constant state and zero dynamics") {
  const TimeGrid grid = TimeGrid::build({0.0, 0.5, 1.0}, {4, 5});
  const int nn = grid.node_count();
  const DynamicsModel model = zero_model();
  const VectorXd x0 = VectorXd::Constant(1, 0.7);
  const VectorXd y = VectorXd::Constant(nn, 0.7);
  const VectorXd z = VectorXd::Zero(nn);
  const VectorXd r = assemble_residual(grid, y, z, grid.domain_length(), model, VectorXd(), x0);
  CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-14);  // roundoff through the differentiation rows
}

TEST_CASE("r_init block equals interpolated x(0) minus x0") {
  const TimeGrid grid = TimeGrid::build({0.0, 1.0}, {4});
  const int nn = grid.node_count();
  const DynamicsModel model = integrator_model();
  VectorXd y = VectorXd::LinSpaced(nn, 0.3, 1.2);
  const VectorXd z = VectorXd::Zero(nn);
  const VectorXd x0 = VectorXd::Constant(1, 0.1);
  const VectorXd r = assemble_residual(grid, y, z, grid.domain_length(), model, VectorXd(), x0);
  const int coll_rows = (nn - grid.interval_count() - 1) * model.state_dim;
  CHECK(r(coll_rows) == y(0) - 0.1);
}

TEST_CASE("residual Jacobians match finite differences") {
  const TimeGrid grid = TimeGrid::build({0.0, 1.0}, {5});
  const int nn = grid.node_count();

  ZermeloParams zp;
  zp.current = {DictTerm{0.4, {}}, DictTerm{0.5, {TermFactor{0, TermFactor::Fn::Power, 1}}}};
  DynamicsModel model = make_zermelo_model(zp);
  attach_uniform_basis_1d(model, 0, 0.0, 1.2, 4, 12.0);

  VectorXd y(2 * nn), z(nn), theta(4);
  for (int i = 0; i < nn; ++i) {
    const double t = grid.nodes()(i);
    y(i) = 0.9 * t;
    y(nn + i) = 0.3 * std::sin(M_PI * t);
    z(i) = 0.2 * std::cos(t);
  }
  theta << 0.05, -0.02, 0.03, 0.01;
  const VectorXd x0 = VectorXd::Zero(2);
  const double T = 1.3;  // exercise the time-scaling column

  ResidualJacobians jac;
  const VectorXd r0 = assemble_residual(grid, y, z, T, model, theta, x0, &jac);

  const double h = 1e-7;
  for (int j = 0; j < y.size(); ++j) {
    VectorXd yp = y, ym = y;
    yp(j) += h;
    ym(j) -= h;
    const VectorXd fd = (assemble_residual(grid, yp, z, T, model, theta, x0) -
                         assemble_residual(grid, ym, z, T, model, theta, x0)) /
                        (2.0 * h);
    CHECK((fd - jac.wrt_y.col(j)).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
  for (int j = 0; j < z.size(); ++j) {
    VectorXd zp_ = z, zm = z;
    zp_(j) += h;
    zm(j) -= h;
    const VectorXd fd = (assemble_residual(grid, y, zp_, T, model, theta, x0) -
                         assemble_residual(grid, y, zm, T, model, theta, x0)) /
                        (2.0 * h);
    CHECK((fd - jac.wrt_z.col(j)).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
  for (int j = 0; j < theta.size(); ++j) {
    VectorXd tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const VectorXd fd = (assemble_residual(grid, y, z, T, model, tp, x0) -
                         assemble_residual(grid, y, z, T, model, tm, x0)) /
                        (2.0 * h);
    CHECK((fd - jac.wrt_theta.col(j)).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
  {
    const VectorXd fd = (assemble_residual(grid, y, z, T + h, model, theta, x0) -
                         assemble_residual(grid, y, z, T - h, model, theta, x0)) /
                        (2.0 * h);
    CHECK((fd - jac.wrt_T).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}
