#ifndef SDOED_QP_HPP
#define SDOED_QP_HPP

#include <Eigen/Core>
#include <vector>

namespace sdoed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Convex quadratic program
//   min 0.5 d'Hd + g'd   s.t.  Ae d = be,  Ai d <= bi
// with H symmetric positive definite. Inequalities are handled elastically:
// internally each row gets a slack penalized by `penalty` in the objective, so
// the subproblem is always feasible; a zero slack vector certifies that the
// original linearized constraints were satisfiable. This matches the l1
// exact-penalty model used by the SQP line search.
struct QpProblem {
  MatrixXd H;
  VectorXd g;
  MatrixXd Ae;
  VectorXd be;
  MatrixXd Ai;
  VectorXd bi;
};

struct QpOptions {
  double penalty = 1e4;
  // Quadratic curvature on the slacks. Any positive value leaves the solution
  // unchanged whenever the linear penalty dominates (slacks sit at their lower
  // bound); an O(1) value keeps the working-set systems well conditioned.
  double slack_reg = 1.0;
  double tol = 1e-11;
  int max_iterations = 0;          // 0 = automatic from the problem size
  std::vector<int> warm_working;   // inequality rows to seed the working set
};

struct QpResult {
  VectorXd d;
  VectorXd lambda_eq;
  VectorXd lambda_in;   // one per inequality row, >= 0
  VectorXd slack;       // elastic violations; all ~0 when the QP was feasible
  std::vector<int> working;  // final working set (inequality rows held active)
  int iterations = 0;
};

QpResult solve_qp(const QpProblem& problem, const QpOptions& opts = {});

}  // namespace sdoed

#endif
