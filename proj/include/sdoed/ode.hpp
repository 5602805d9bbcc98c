#ifndef SDOED_ODE_HPP
#define SDOED_ODE_HPP

#include <Eigen/Core>
#include <functional>

namespace sdoed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct OdeOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double initial_step = 0.0;  // 0 = automatic
  int max_steps = 1000000;
};

struct OdeSolution {
  VectorXd times;  // the requested sample times
  MatrixXd states; // one row per sample time
};

// Dormand-Prince 5(4) with adaptive steps. Integrates from t0 through the
// (monotone) sample times to the last one; t0 must equal sample_times(0).
// Backward integration (decreasing samples) is supported. Throws SolveError
// with the failure time when the step size collapses or the right-hand side
// is non-finite.
OdeSolution integrate_ode(const std::function<VectorXd(double, const VectorXd&)>& f,
                          const VectorXd& x0, const VectorXd& sample_times,
                          const OdeOptions& opts = {});

}  // namespace sdoed

#endif
