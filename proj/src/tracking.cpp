#include "sdoed/tracking.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace sdoed {

namespace {

// residual at (reference + offsets); theta always explicit so the theta
// Jacobian is available
VectorXd shifted_residual(const TrackingProblem& tp, const VectorXd& e, const VectorXd& v,
                          const VectorXd& theta, ResidualJacobians* jac = nullptr) {
  const OcpProblem& p = *tp.ocp;
  return assemble_residual(p.grid, (tp.reference.y + e).eval(), (tp.reference.z + v).eval(),
                           tp.reference.T, *p.model, theta, p.x0, jac);
}

void name_singular_interval(const TrackingProblem& tp, const MatrixXd& jy) {
  const OcpProblem& p = *tp.ocp;
  const int n = p.model->state_dim;
  const int nn = p.grid.node_count();
  for (int s = 0; s < p.grid.interval_count(); ++s) {
    const auto& sub = p.grid.interval(s);
    std::vector<int> cols;
    for (int k = 0; k < n; ++k)
      for (int idx : sub.node_index) cols.push_back(k * nn + idx);
    MatrixXd block(jy.rows(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) block.col(c) = jy.col(cols[c]);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(block);
    qr.setThreshold(1e-12);
    if (qr.rank() < static_cast<Eigen::Index>(cols.size()))
      throw SolveError("tracking: singular linearized collocation system in subinterval " +
                       std::to_string(s) + " [" + std::to_string(sub.left) + ", " +
                       std::to_string(sub.right) + "]");
  }
  throw SolveError("tracking: singular linearized collocation system");
}

struct Variational {
  MatrixXd gv;      // de/dv, K_n x K_m
  MatrixXd gtheta;  // de/dtheta, K_n x q
};

Variational variational_solves(const TrackingProblem& tp) {
  const VectorXd theta0 = VectorXd::Zero(tp.ocp->model->theta_dim());
  ResidualJacobians jac;
  shifted_residual(tp, VectorXd::Zero(tp.reference.y.size()),
                   VectorXd::Zero(tp.reference.z.size()), theta0, &jac);
  Eigen::PartialPivLU<MatrixXd> lu(jac.wrt_y);
  // cheap singularity probe: reconstruct error of the factorization
  const double diag_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  const double diag_max = lu.matrixLU().diagonal().cwiseAbs().maxCoeff();
  if (!(diag_min > 1e-13 * std::max(1.0, diag_max))) name_singular_interval(tp, jac.wrt_y);
  Variational out;
  out.gv = -lu.solve(jac.wrt_z);
  out.gtheta = -lu.solve(jac.wrt_theta);
  return out;
}

}  // namespace

TrackingProblem make_tracking_problem(const OcpProblem& ocp, const DiscreteSolution& reference,
                                      double alpha) {
  if (alpha < 0.0) throw ContractViolation("make_tracking_problem: alpha must be nonnegative");
  const int n = ocp.model->state_dim, m = ocp.model->control_dim;
  const int nn = ocp.grid.node_count();
  if (reference.y.size() != n * nn || reference.z.size() != m * nn)
    throw ContractViolation("make_tracking_problem: reference does not match the grid");

  const VectorXd r = assemble_residual(ocp.grid, reference.y, reference.z, reference.T,
                                       *ocp.model, VectorXd(), ocp.x0);
  if (r.lpNorm<Eigen::Infinity>() > 1e-5)
    throw ContractViolation("make_tracking_problem: reference violates its own dynamics (" +
                            std::to_string(r.lpNorm<Eigen::Infinity>()) + ")");

  TrackingProblem tp;
  tp.ocp = &ocp;
  tp.reference = reference;
  tp.alpha = alpha;
  const double scale = reference.T / ocp.grid.domain_length();
  tp.mx_diag.resize(n * nn);
  tp.mu_diag.resize(m * nn);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < nn; ++i) tp.mx_diag(k * nn + i) = scale * ocp.grid.weights()(i);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < nn; ++i) tp.mu_diag(k * nn + i) = scale * ocp.grid.weights()(i);
  return tp;
}

VectorXd solve_error_dynamics(const TrackingProblem& tp, const VectorXd& v,
                              const VectorXd& theta) {
  if (v.size() != tp.reference.z.size())
    throw ContractViolation("solve_error_dynamics: v length mismatch");
  const VectorXd r_ref = shifted_residual(tp, VectorXd::Zero(tp.reference.y.size()),
                                          VectorXd::Zero(v.size()),
                                          VectorXd::Zero(tp.ocp->model->theta_dim()));

  VectorXd e = VectorXd::Zero(tp.reference.y.size());
  for (int it = 0; it < 30; ++it) {
    ResidualJacobians jac;
    VectorXd r;
    try {
      r = shifted_residual(tp, e, v, theta, &jac) - r_ref;
    } catch (const EvaluationError& err) {
      throw SolveError(std::string("tracking: error dynamics left the admissible set (") +
                       err.what() + ")");
    }
    const double rn = r.lpNorm<Eigen::Infinity>();
    if (rn <= 1e-12 * std::max(1.0, e.lpNorm<Eigen::Infinity>())) return e;
    const VectorXd step = Eigen::PartialPivLU<MatrixXd>(jac.wrt_y).solve(r);
    if (!step.allFinite())
      throw SolveError("tracking: error-dynamics Newton step non-finite");
    e -= step;
    if (step.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, e.lpNorm<Eigen::Infinity>()))
      return e;
  }
  throw SolveError("tracking: error-dynamics Newton did not converge for |v|=" +
                   std::to_string(v.lpNorm<Eigen::Infinity>()) +
                   ", |theta|=" + std::to_string(theta.size() ? theta.lpNorm<Eigen::Infinity>()
                                                              : 0.0));
}

double tracking_objective(const TrackingProblem& tp, const VectorXd& v, const VectorXd& theta,
                          VectorXd* error_out) {
  const VectorXd e = solve_error_dynamics(tp, v, theta);
  if (error_out) *error_out = e;
  return 0.5 * e.dot(tp.mx_diag.cwiseProduct(e)) + 0.5 * tp.alpha * v.dot(tp.mu_diag.cwiseProduct(v));
}

VectorXd tracking_gradient(const TrackingProblem& tp, const VectorXd& v, const VectorXd& theta) {
  const VectorXd e = solve_error_dynamics(tp, v, theta);
  ResidualJacobians jac;
  shifted_residual(tp, e, v, theta, &jac);
  Eigen::PartialPivLU<MatrixXd> lu(jac.wrt_y);
  const MatrixXd gv = -lu.solve(jac.wrt_z);
  return gv.transpose() * tp.mx_diag.cwiseProduct(e) + tp.alpha * tp.mu_diag.cwiseProduct(v);
}

MatrixXd assemble_hessian(const TrackingProblem& tp) {
  const Variational var = variational_solves(tp);
  return var.gv.transpose() * tp.mx_diag.asDiagonal() * var.gv +
         tp.alpha * MatrixXd(tp.mu_diag.asDiagonal());
}

MatrixXd assemble_mixed(const TrackingProblem& tp) {
  if (tp.ocp->model->theta_dim() == 0)
    throw ContractViolation("assemble_mixed: model has no perturbation basis");
  const Variational var = variational_solves(tp);
  return var.gv.transpose() * tp.mx_diag.asDiagonal() * var.gtheta;
}

SensitivityMatrix sensitivity_matrix(const TrackingProblem& tp) {
  if (tp.alpha <= 0.0)
    throw ContractViolation("sensitivity_matrix: alpha must be positive for an invertible Hessian");
  const Variational var = variational_solves(tp);
  const MatrixXd hess = var.gv.transpose() * tp.mx_diag.asDiagonal() * var.gv +
                        tp.alpha * MatrixXd(tp.mu_diag.asDiagonal());
  const MatrixXd mixed = var.gv.transpose() * tp.mx_diag.asDiagonal() * var.gtheta;

  Eigen::LLT<MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success)
    throw SolveError("sensitivity_matrix: Hessian factorization failed (condition issue)");

  SensitivityMatrix sm;
  sm.D = -llt.solve(mixed);
  sm.mu_diag = tp.mu_diag;
  const MatrixXd weighted = sm.D.transpose() * tp.mu_diag.asDiagonal() * sm.D;
  sm.indices = weighted.diagonal().cwiseMax(0.0).cwiseSqrt();
  return sm;
}

double sensitivity_index(const SensitivityMatrix& sm, const VectorXd& delta_theta) {
  if (delta_theta.size() != sm.D.cols())
    throw ContractViolation("sensitivity_index: delta_theta length mismatch");
  const double denom = delta_theta.norm();
  if (denom == 0.0) throw ContractViolation("sensitivity_index: delta_theta must be nonzero");
  const VectorXd dv = sm.D * delta_theta;
  return std::sqrt(dv.dot(sm.mu_diag.cwiseProduct(dv))) / denom;
}

VectorXd solve_tracking_minimizer(const TrackingProblem& tp, const VectorXd& theta, double tol,
                                  int max_iterations) {
  const int km = static_cast<int>(tp.reference.z.size());
  VectorXd v = VectorXd::Zero(km);
  double obj = tracking_objective(tp, v, theta);

  for (int it = 0; it < max_iterations; ++it) {
    const VectorXd e = solve_error_dynamics(tp, v, theta);
    ResidualJacobians jac;
    shifted_residual(tp, e, v, theta, &jac);
    Eigen::PartialPivLU<MatrixXd> lu(jac.wrt_y);
    const MatrixXd gv = -lu.solve(jac.wrt_z);
    const VectorXd grad =
        gv.transpose() * tp.mx_diag.cwiseProduct(e) + tp.alpha * tp.mu_diag.cwiseProduct(v);
    if (grad.lpNorm<Eigen::Infinity>() <= tol) return v;

    const MatrixXd hess = gv.transpose() * tp.mx_diag.asDiagonal() * gv +
                          tp.alpha * MatrixXd(tp.mu_diag.asDiagonal());
    const VectorXd step = -Eigen::LLT<MatrixXd>(hess).solve(grad);

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-10) {
      const VectorXd vt = v + alpha * step;
      double objt;
      try {
        objt = tracking_objective(tp, vt, theta);
      } catch (const SolveError&) {
        alpha *= 0.5;
        continue;
      }
      if (objt <= obj + 1e-4 * alpha * grad.dot(step)) {
        v = vt;
        obj = objt;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw SolveError("solve_tracking_minimizer: line search failed at iteration " +
                       std::to_string(it));
    if ((alpha * step).lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, v.lpNorm<Eigen::Infinity>()))
      return v;
  }
  throw SolveError("solve_tracking_minimizer: iteration limit reached");
}

}  // namespace sdoed
