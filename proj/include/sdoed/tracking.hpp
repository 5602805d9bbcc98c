#ifndef SDOED_TRACKING_HPP
#define SDOED_TRACKING_HPP

#include "sdoed/nlp.hpp"

namespace sdoed {

// Reference-tracking problem around a solved trajectory: choose a control
// augmentation v minimizing 1/2 |e|_Mx^2 + alpha/2 |v|_Mu^2 where the error e
// follows the deviation dynamics on the same collocation grid. Mx and Mu are
// the quadrature-induced (diagonal) inner products on the discretized state
// and control spaces.
struct TrackingProblem {
  const OcpProblem* ocp = nullptr;
  DiscreteSolution reference;
  double alpha = 1e-2;
  VectorXd mx_diag;  // length n * nn
  VectorXd mu_diag;  // length m * nn
};

TrackingProblem make_tracking_problem(const OcpProblem& ocp, const DiscreteSolution& reference,
                                      double alpha);

// Error-dynamics collocation solve: the deviation system is the collocation
// residual at (reference + offset) minus the residual at the reference, so
// the reference is an exact equilibrium of the discrete problem.
VectorXd solve_error_dynamics(const TrackingProblem& tp, const VectorXd& v, const VectorXd& theta);

double tracking_objective(const TrackingProblem& tp, const VectorXd& v, const VectorXd& theta,
                          VectorXd* error_out = nullptr);

// Gradient of the objective in v at (v, theta) (variational/adjoint form).
VectorXd tracking_gradient(const TrackingProblem& tp, const VectorXd& v, const VectorXd& theta);

// Exact Hessian at the reference point (Gauss-Newton form; the residual
// vanishes identically there, so no curvature terms are dropped).
MatrixXd assemble_hessian(const TrackingProblem& tp);

// Mixed second derivative w.r.t. (v, theta) at the reference point.
MatrixXd assemble_mixed(const TrackingProblem& tp);

struct SensitivityMatrix {
  MatrixXd D;         // K_m x q
  VectorXd mu_diag;   // control-space inner product defining the norm
  VectorXd indices;   // d_i = sqrt((D' Mu D)_ii)
};

SensitivityMatrix sensitivity_matrix(const TrackingProblem& tp);

// S(dtheta) = |D dtheta|_Mu / |dtheta|_2
double sensitivity_index(const SensitivityMatrix& sm, const VectorXd& delta_theta);

// Minimize tracking_objective over v at fixed theta (Gauss-Newton with a
// backtracking line search); the re-solve oracle for first-order validation.
VectorXd solve_tracking_minimizer(const TrackingProblem& tp, const VectorXd& theta,
                                  double tol = 1e-10, int max_iterations = 50);

}  // namespace sdoed

#endif
