#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sdoed/rng.hpp"
#include "sdoed/tracking.hpp"
#include "support/fixtures.hpp"

using namespace sdoed;

namespace {

const testing::ZermeloFixture& fixture() {
  static testing::ZermeloFixture fx = testing::make_zermelo_fixture();
  return fx;
}

TrackingProblem tracking() { return make_tracking_problem(fixture().ocp, fixture().reference, 1e-2); }

}  // namespace

TEST_CASE("reference is an exact equilibrium: J(0,0) = 0 and gradient vanishes") {
  const TrackingProblem tp = tracking();
  const int km = static_cast<int>(tp.reference.z.size());
  const int q = tp.ocp->model->theta_dim();

  CHECK(tracking_objective(tp, VectorXd::Zero(km), VectorXd::Zero(q)) <= 1e-16);

  const VectorXd g = tracking_gradient(tp, VectorXd::Zero(km), VectorXd::Zero(q));
  const double gnorm = std::sqrt(g.dot(tp.mu_diag.cwiseInverse().cwiseProduct(g)));
  CHECK(gnorm <= 1e-8);
}

TEST_CASE("any nonzero control augmentation costs something") {
  const TrackingProblem tp = tracking();
  const int km = static_cast<int>(tp.reference.z.size());
  const int q = tp.ocp->model->theta_dim();
  CounterRng rng(7, 1);
  for (int rep = 0; rep < 5; ++rep) {
    VectorXd v(km);
    for (int i = 0; i < km; ++i) v(i) = 0.05 * rng.next_normal();
    CHECK(tracking_objective(tp, v, VectorXd::Zero(q)) > 0.0);
  }
}

TEST_CASE("small perturbations match the linearized response to third order") {
  const TrackingProblem tp = tracking();
  const int km = static_cast<int>(tp.reference.z.size());
  const int q = tp.ocp->model->theta_dim();

  // J(0, theta) = 1/2 |e|_Mx^2 with e from the full nonlinear solve; compare
  // against the purely linear prediction e_lin = G_theta * theta
  ResidualJacobians jac;
  assemble_residual(tp.ocp->grid, tp.reference.y, tp.reference.z, tp.reference.T, *tp.ocp->model,
                    VectorXd::Zero(q), tp.ocp->x0, &jac);
  const Eigen::PartialPivLU<MatrixXd> lu(jac.wrt_y);
  const MatrixXd gtheta = -lu.solve(jac.wrt_theta);

  CounterRng rng(11, 2);
  VectorXd dir(q);
  for (int i = 0; i < q; ++i) dir(i) = rng.next_normal();
  dir.normalize();

  for (double eps : {1e-2, 5e-3}) {
    const VectorXd theta = eps * dir;
    const double j_full = tracking_objective(tp, VectorXd::Zero(km), theta);
    const VectorXd e_lin = gtheta * theta;
    const double j_lin = 0.5 * e_lin.dot(tp.mx_diag.cwiseProduct(e_lin));
    CHECK(std::abs(j_full - j_lin) <= 20.0 * eps * eps * eps + 1e-14);
  }
}

TEST_CASE("Hessian is symmetric positive definite and matches finite differences") {
  const TrackingProblem tp = tracking();
  const MatrixXd h = assemble_hessian(tp);
  const int km = static_cast<int>(h.rows());
  const int q = tp.ocp->model->theta_dim();

  CHECK((h - h.transpose()).lpNorm<Eigen::Infinity>() <= 1e-10 * h.lpNorm<Eigen::Infinity>());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
  CHECK(es.eigenvalues().minCoeff() >= tp.alpha * tp.mu_diag.minCoeff() - 1e-10);

  // columns vs central differences of the gradient
  const double step = 1e-5;
  for (int j = 0; j < km; j += 7) {
    VectorXd vp = VectorXd::Zero(km), vm = VectorXd::Zero(km);
    vp(j) += step;
    vm(j) -= step;
    const VectorXd fd = (tracking_gradient(tp, vp, VectorXd::Zero(q)) -
                         tracking_gradient(tp, vm, VectorXd::Zero(q))) /
                        (2.0 * step);
    const double denom = std::max(1e-12, h.col(j).lpNorm<Eigen::Infinity>());
    CHECK((fd - h.col(j)).lpNorm<Eigen::Infinity>() / denom <= 1e-5);
  }
}

TEST_CASE("large alpha drives the Hessian to alpha * Mu") {
  TrackingProblem tp = tracking();
  tp.alpha = 1e6;
  const MatrixXd h = assemble_hessian(tp);
  const MatrixXd target = tp.alpha * MatrixXd(tp.mu_diag.asDiagonal());
  CHECK((h - target).lpNorm<Eigen::Infinity>() / target.lpNorm<Eigen::Infinity>() <= 1e-4);
}

TEST_CASE("mixed derivative matches finite differences in theta") {
  const TrackingProblem tp = tracking();
  const MatrixXd b = assemble_mixed(tp);
  const int km = static_cast<int>(b.rows());
  const int q = static_cast<int>(b.cols());

  const double step = 1e-5;
  for (int j = 0; j < q; j += 3) {
    VectorXd tp_ = VectorXd::Zero(q), tm = VectorXd::Zero(q);
    tp_(j) += step;
    tm(j) -= step;
    const VectorXd fd = (tracking_gradient(tp, VectorXd::Zero(km), tp_) -
                         tracking_gradient(tp, VectorXd::Zero(km), tm)) /
                        (2.0 * step);
    const double denom = std::max(1e-10, b.col(j).lpNorm<Eigen::Infinity>());
    CHECK((fd - b.col(j)).lpNorm<Eigen::Infinity>() / denom <= 1e-5);
  }
}

TEST_CASE("Gauss-Newton Hessian is exact at the reference") {
  // full finite-difference Hessian of the objective on a coarse grid
  testing::ZermeloFixture fx = testing::make_zermelo_fixture(6, 1e-10, {12});
  const TrackingProblem tp = make_tracking_problem(fx.ocp, fx.reference, 1e-2);
  const MatrixXd h = assemble_hessian(tp);
  const int km = static_cast<int>(h.rows());
  REQUIRE(km <= 20);

  MatrixXd h_fd(km, km);
  const double step = 1e-4;
  const int q = tp.ocp->model->theta_dim();
  const VectorXd theta0 = VectorXd::Zero(q);
  auto obj = [&](const VectorXd& v) { return tracking_objective(tp, v, theta0); };
  for (int i = 0; i < km; ++i) {
    for (int j = i; j < km; ++j) {
      VectorXd vpp = VectorXd::Zero(km), vpm = VectorXd::Zero(km), vmp = VectorXd::Zero(km),
               vmm = VectorXd::Zero(km);
      vpp(i) += step;
      vpp(j) += step;
      vpm(i) += step;
      vpm(j) -= step;
      vmp(i) -= step;
      vmp(j) += step;
      vmm(i) -= step;
      vmm(j) -= step;
      h_fd(i, j) = h_fd(j, i) =
          (obj(vpp) - obj(vpm) - obj(vmp) + obj(vmm)) / (4.0 * step * step);
    }
  }
  CHECK((h - h_fd).norm() / h_fd.norm() <= 1e-4);
}

TEST_CASE("sensitivity matrix predicts the re-solved minimizer to first order") {
  const TrackingProblem tp = tracking();
  const SensitivityMatrix sm = sensitivity_matrix(tp);
  const int q = static_cast<int>(sm.D.cols());

  CounterRng rng(23, 5);
  VectorXd dir(q);
  for (int i = 0; i < q; ++i) dir(i) = rng.next_normal();
  dir.normalize();

  auto weighted_norm = [&](const VectorXd& v) {
    return std::sqrt(v.dot(sm.mu_diag.cwiseProduct(v)));
  };

  const double eps = 1e-2;
  double prev_ratio = -1.0;
  for (const double e : {eps, 0.5 * eps}) {
    const VectorXd vstar = solve_tracking_minimizer(tp, (e * dir).eval(), 1e-12);
    const VectorXd pred = e * (sm.D * dir);
    const double ratio = weighted_norm(vstar - pred) / weighted_norm(pred);
    CHECK(ratio <= 0.15);
    if (prev_ratio >= 0.0) CHECK(ratio <= 0.6 * prev_ratio);
    prev_ratio = ratio;
  }
}

TEST_CASE("a basis function with no excitation yields a zero column") {
  testing::ZermeloFixture fx = testing::make_zermelo_fixture(0, 1e-9);
  // one useful basis function plus one centered far outside the trajectory
  attach_uniform_basis_1d(*fx.model, 0, 0.5, 0.5, 1, 60.0);
  attach_uniform_basis_1d(*fx.model, 0, 25.0, 25.0, 1, 60.0);
  const TrackingProblem tp = make_tracking_problem(fx.ocp, fx.reference, 1e-2);
  const MatrixXd b = assemble_mixed(tp);
  const SensitivityMatrix sm = sensitivity_matrix(tp);
  CHECK(b.col(1).lpNorm<Eigen::Infinity>() <= 1e-12 * b.col(0).lpNorm<Eigen::Infinity>());
  CHECK(sm.D.col(1).lpNorm<Eigen::Infinity>() <= 1e-12 * sm.D.col(0).lpNorm<Eigen::Infinity>());
  CHECK(sm.indices(1) <= 1e-12 * sm.indices(0));
}

TEST_CASE("sensitivity index properties") {
  const TrackingProblem tp = tracking();
  const SensitivityMatrix sm = sensitivity_matrix(tp);
  const int q = static_cast<int>(sm.D.cols());

  SUBCASE("unit directions reproduce the per-coordinate indices") {
    for (int i = 0; i < q; ++i) {
      VectorXd ei = VectorXd::Zero(q);
      ei(i) = 1.0;
      CHECK(sensitivity_index(sm, ei) == doctest::Approx(sm.indices(i)).epsilon(1e-12));
    }
  }
  SUBCASE("scaling invariance is exact") {
    CounterRng rng(31, 9);
    VectorXd d(q);
    for (int i = 0; i < q; ++i) d(i) = rng.next_normal();
    const double s1 = sensitivity_index(sm, d);
    for (double c : {2.0, -3.5, 1e-6, 1e6}) {
      CHECK(sensitivity_index(sm, (c * d).eval()) == doctest::Approx(s1).epsilon(1e-12));
    }
  }
  SUBCASE("bounded by the weighted top singular value, attained at its direction") {
    const MatrixXd wd = sm.mu_diag.cwiseSqrt().asDiagonal() * sm.D;
    Eigen::JacobiSVD<MatrixXd> svd(wd, Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    CounterRng rng(37, 4);
    for (int rep = 0; rep < 10; ++rep) {
      VectorXd d(q);
      for (int i = 0; i < q; ++i) d(i) = rng.next_normal();
      CHECK(sensitivity_index(sm, d) <= smax * (1.0 + 1e-12));
    }
    CHECK(sensitivity_index(sm, VectorXd(svd.matrixV().col(0))) ==
          doctest::Approx(smax).epsilon(1e-10));
  }
  SUBCASE("zero direction is rejected") {
    CHECK_THROWS_AS(sensitivity_index(sm, VectorXd::Zero(q)), ContractViolation);
  }
}

TEST_CASE("alpha = 0 is rejected for the sensitivity operator") {
  TrackingProblem tp = tracking();
  tp.alpha = 0.0;
  CHECK_THROWS_AS(sensitivity_matrix(tp), ContractViolation);
}
