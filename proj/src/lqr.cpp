#include "sdoed/lqr.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace sdoed {

namespace {

void check_weights(const LqrWeights& w, int n, int m) {
  auto sym = [](const MatrixXd& a) {
    return (a - a.transpose()).lpNorm<Eigen::Infinity>() <=
           1e-10 * std::max(1.0, a.lpNorm<Eigen::Infinity>());
  };
  if (w.Q.rows() != n || w.Q.cols() != n || !sym(w.Q))
    throw ContractViolation("lqr: Q must be symmetric n x n");
  if (w.Qf.rows() != n || w.Qf.cols() != n || !sym(w.Qf))
    throw ContractViolation("lqr: Qf must be symmetric n x n");
  if (w.R.rows() != m || w.R.cols() != m || !sym(w.R))
    throw ContractViolation("lqr: R must be symmetric m x m");
  Eigen::LLT<MatrixXd> llt(w.R);
  if (llt.info() != Eigen::Success)
    throw ContractViolation("lqr: R must be positive definite");
}

}  // namespace

MatrixXd GainSchedule::gain_at(double t) const {
  const int np = static_cast<int>(times.size());
  if (np == 0) throw ContractViolation("GainSchedule: empty schedule");
  if (t <= times(0)) return gains.front();
  if (t >= times(np - 1)) return gains.back();
  int lo = 0, hi = np - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (times(mid) <= t ? lo : hi) = mid;
  }
  const double f = (t - times(lo)) / (times(hi) - times(lo));
  return (1.0 - f) * gains[lo] + f * gains[hi];
}

GainSchedule solve_riccati(const OcpProblem& ocp, const DiscreteSolution& reference,
                           const LqrWeights& weights, const RiccatiOptions& opts) {
  const int n = ocp.model->state_dim;
  const int m = ocp.model->control_dim;
  check_weights(weights, n, m);

  const double T = reference.T;
  const double tau_per_t = ocp.grid.domain_length() / T;
  const MatrixXd r_inv = weights.R.llt().solve(MatrixXd::Identity(m, m));

  auto linearize_at = [&](double t, MatrixXd& a, MatrixXd& b) {
    const double tau = std::clamp(t * tau_per_t, ocp.grid.domain_start(), ocp.grid.domain_end());
    const VectorXd xr = ocp.grid.interpolate(reference.y, n, tau);
    const VectorXd ur = ocp.grid.interpolate(reference.z, m, tau);
    const Linearization lin = linearize(*ocp.model, t, xr, ur, VectorXd());
    a = lin.wrt_state;
    b = lin.wrt_control;
  };

  // vec(P) integrated backward from P(T) = Qf
  auto rhs = [&](double t, const VectorXd& pvec) {
    const Eigen::Map<const MatrixXd> p(pvec.data(), n, n);
    if (p.lpNorm<Eigen::Infinity>() > opts.norm_cap)
      throw SolveError("solve_riccati: |P| exceeded cap at t=" + std::to_string(t));
    MatrixXd a(n, n), b(n, m);
    linearize_at(t, a, b);
    const MatrixXd pdot =
        -(a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + weights.Q);
    return VectorXd(Eigen::Map<const VectorXd>(pdot.data(), n * n));
  };

  const VectorXd samples = VectorXd::LinSpaced(opts.store_points, T, 0.0);
  const VectorXd p_final = Eigen::Map<const VectorXd>(weights.Qf.data(), n * n);
  const OdeSolution sol = integrate_ode(rhs, p_final, samples, opts.ode);

  GainSchedule sched;
  sched.weights = weights;
  sched.times = VectorXd(opts.store_points);
  sched.gains.resize(opts.store_points);
  sched.riccati.resize(opts.store_points);
  for (int i = 0; i < opts.store_points; ++i) {
    const int rev = opts.store_points - 1 - i;  // ascending time order
    sched.times(i) = samples(rev);
    const VectorXd pv = sol.states.row(rev).transpose();
    const MatrixXd p = Eigen::Map<const MatrixXd>(pv.data(), n, n);
    MatrixXd a(n, n), b(n, m);
    linearize_at(sched.times(i), a, b);
    sched.riccati[i] = p;
    sched.gains[i] = r_inv * b.transpose() * p;
  }
  return sched;
}

SimulationResult simulate_closed_loop(const OcpProblem& ref_ocp, const DiscreteSolution& reference,
                                      const DynamicsModel& truth, const GainSchedule* gains,
                                      const SimulationOptions& opts) {
  const int n = ref_ocp.model->state_dim;
  const int m = ref_ocp.model->control_dim;
  if (truth.state_dim != n || truth.control_dim != m)
    throw ContractViolation("simulate_closed_loop: truth model dimensions mismatch");

  const double T = reference.T;
  const double tau_per_t = ref_ocp.grid.domain_length() / T;
  const VectorXd lower = ref_ocp.model->control_lower;
  const VectorXd upper = ref_ocp.model->control_upper;

  auto ref_state = [&](double t) {
    const double tau = std::clamp(t * tau_per_t, ref_ocp.grid.domain_start(),
                                  ref_ocp.grid.domain_end());
    return ref_ocp.grid.interpolate(reference.y, n, tau);
  };
  auto ref_control = [&](double t) {
    const double tau = std::clamp(t * tau_per_t, ref_ocp.grid.domain_start(),
                                  ref_ocp.grid.domain_end());
    return ref_ocp.grid.interpolate(reference.z, m, tau);
  };
  auto demanded = [&](double t, const VectorXd& x) {
    VectorXd u = ref_control(t);
    if (gains) u -= gains->gain_at(t) * (x - ref_state(t));
    return u;
  };

  // augmented states: x, then integrals of tracking error, applied effort,
  // demanded effort
  auto rhs = [&](double t, const VectorXd& aug) {
    const VectorXd x = aug.head(n);
    const VectorXd u_ref = ref_control(t);
    const VectorXd u_dem = demanded(t, x);
    const VectorXd u_app = u_dem.cwiseMax(lower).cwiseMin(upper);
    VectorXd out(n + 3);
    out.head(n) = eval_rhs(truth, t, x, u_app, VectorXd());
    out(n) = (x - ref_state(t)).squaredNorm();
    out(n + 1) = (u_app - u_ref).squaredNorm();
    out(n + 2) = (u_dem - u_ref).squaredNorm();
    return out;
  };

  VectorXd aug0 = VectorXd::Zero(n + 3);
  aug0.head(n) = ref_ocp.x0;
  const VectorXd samples = VectorXd::LinSpaced(opts.samples, 0.0, T);
  OdeSolution sol;
  try {
    sol = integrate_ode(rhs, aug0, samples, opts.ode);
  } catch (const EvaluationError& e) {
    throw SolveError(std::string("simulate_closed_loop: truth model evaluation failed (") +
                     e.what() + ")");
  }

  SimulationResult res;
  res.times = samples;
  res.states = sol.states.leftCols(n);
  res.controls_applied.resize(opts.samples, m);
  res.controls_demanded.resize(opts.samples, m);
  res.reference_states.resize(opts.samples, n);
  res.reference_controls.resize(opts.samples, m);
  res.clipped.assign(opts.samples, std::vector<bool>(m, false));
  res.channel_violated.assign(m, false);
  for (int i = 0; i < opts.samples; ++i) {
    const double t = samples(i);
    const VectorXd x = res.states.row(i).transpose();
    const VectorXd u_dem = demanded(t, x);
    const VectorXd u_app = u_dem.cwiseMax(lower).cwiseMin(upper);
    res.controls_demanded.row(i) = u_dem.transpose();
    res.controls_applied.row(i) = u_app.transpose();
    res.reference_states.row(i) = ref_state(t).transpose();
    res.reference_controls.row(i) = ref_control(t).transpose();
    for (int k = 0; k < m; ++k) {
      const bool clip = u_dem(k) < lower(k) || u_dem(k) > upper(k);
      res.clipped[i][k] = clip;
      if (clip) res.channel_violated[k] = true;
    }
  }
  res.tracking_error = sol.states(opts.samples - 1, n);
  res.control_effort = sol.states(opts.samples - 1, n + 1);
  res.demand_effort = sol.states(opts.samples - 1, n + 2);
  return res;
}

}  // namespace sdoed
