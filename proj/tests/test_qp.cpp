#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "sdoed/errors.hpp"
#include "sdoed/qp.hpp"
#include "sdoed/rng.hpp"

using namespace sdoed;

TEST_CASE("unconstrained quadratic") {
  QpProblem p;
  p.H = MatrixXd::Identity(3, 3) * 2.0;
  p.g = VectorXd::Constant(3, -2.0);
  const QpResult r = solve_qp(p);
  CHECK((r.d - VectorXd::Ones(3)).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("equality constrained quadratic matches the KKT solution") {
  QpProblem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Zero(2);
  p.Ae = MatrixXd(1, 2);
  p.Ae << 1.0, 1.0;
  p.be = VectorXd::Constant(1, 1.0);
  const QpResult r = solve_qp(p);
  CHECK(r.d(0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r.d(1) == doctest::Approx(0.5).epsilon(1e-10));
  // stationarity: H d + g + Ae' lambda = 0 -> lambda = -0.5
  CHECK(r.lambda_eq(0) == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("active box bound") {
  // min (d - 2)^2 s.t. d <= 1
  QpProblem p;
  p.H = MatrixXd::Identity(1, 1) * 2.0;
  p.g = VectorXd::Constant(1, -4.0);
  p.Ai = MatrixXd::Identity(1, 1);
  p.bi = VectorXd::Constant(1, 1.0);
  const QpResult r = solve_qp(p);
  CHECK(r.d(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.lambda_in(0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.slack.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("inactive constraints leave the minimizer alone") {
  QpProblem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Constant(2, -0.1);
  p.Ai = MatrixXd(2, 2);
  p.Ai << 1, 0, 0, 1;
  p.bi = VectorXd::Constant(2, 5.0);
  const QpResult r = solve_qp(p);
  CHECK((r.d - VectorXd::Constant(2, 0.1)).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(r.lambda_in.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("infeasible linearization engages the elastic slacks") {
  // d <= -1 and -d <= -1 cannot both hold
  QpProblem p;
  p.H = MatrixXd::Identity(1, 1);
  p.g = VectorXd::Zero(1);
  p.Ai = MatrixXd(2, 1);
  p.Ai << 1.0, -1.0;
  p.bi = VectorXd::Constant(2, -1.0);
  const QpResult r = solve_qp(p);
  CHECK(r.slack.lpNorm<Eigen::Infinity>() > 0.1);  // violation reported, not hidden
}

TEST_CASE("random QPs satisfy the KKT conditions") {
  CounterRng rng(42, 3);
  for (int rep = 0; rep < 25; ++rep) {
    const int nv = 2 + static_cast<int>(rng.next_below(6));
    const int ne = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(nv)));
    const int ni = 1 + static_cast<int>(rng.next_below(8));

    MatrixXd M(nv, nv);
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) M(i, j) = rng.next_normal();
    QpProblem p;
    p.H = M * M.transpose() + 0.5 * MatrixXd::Identity(nv, nv);
    p.g = VectorXd::Zero(nv);
    for (int i = 0; i < nv; ++i) p.g(i) = rng.next_normal();
    // anchor the constraints to a known interior point so the instance is
    // certainly feasible and the elastic slacks must vanish
    VectorXd d_feas(nv);
    for (int j = 0; j < nv; ++j) d_feas(j) = rng.next_normal();
    p.Ae = MatrixXd(ne, nv);
    p.be = VectorXd(ne);
    for (int i = 0; i < ne; ++i) {
      for (int j = 0; j < nv; ++j) p.Ae(i, j) = rng.next_normal();
      p.be(i) = p.Ae.row(i).dot(d_feas);
    }
    p.Ai = MatrixXd(ni, nv);
    p.bi = VectorXd(ni);
    for (int i = 0; i < ni; ++i) {
      for (int j = 0; j < nv; ++j) p.Ai(i, j) = rng.next_normal();
      p.bi(i) = p.Ai.row(i).dot(d_feas) + rng.next_uniform(0.1, 2.0);
    }

    const QpResult r = solve_qp(p);
    REQUIRE(r.slack.lpNorm<Eigen::Infinity>() <= 1e-8);

    // primal feasibility
    if (ne) CHECK((p.Ae * r.d - p.be).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(((p.Ai * r.d - p.bi).array() <= 1e-8).all());
    // dual feasibility and stationarity
    CHECK((r.lambda_in.array() >= -1e-10).all());
    VectorXd resid = p.H * r.d + p.g;
    if (ne) resid += p.Ae.transpose() * r.lambda_eq;
    resid += p.Ai.transpose() * r.lambda_in;
    CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-7);
    // complementarity
    for (int i = 0; i < ni; ++i)
      CHECK(std::abs(r.lambda_in(i) * (p.Ai.row(i).dot(r.d) - p.bi(i))) <= 1e-7);
  }
}

TEST_CASE("shape violations are rejected") {
  QpProblem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_qp(p), ContractViolation);
}
