#include "sdoed/ode.hpp"

#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

// Dormand-Prince coefficients.
const double kA[7][6] = {
    {0, 0, 0, 0, 0, 0},
    {1.0 / 5, 0, 0, 0, 0, 0},
    {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
    {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
const double kC[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
const double kB5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0};
const double kB4[7] = {5179.0 / 57600, 0,           7571.0 / 16695, 393.0 / 640,
                       -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

}  // namespace

OdeSolution integrate_ode(const std::function<VectorXd(double, const VectorXd&)>& f,
                          const VectorXd& x0, const VectorXd& sample_times,
                          const OdeOptions& opts) {
  if (sample_times.size() < 1) throw ContractViolation("integrate_ode: no sample times");
  const int dim = static_cast<int>(x0.size());
  const int ns = static_cast<int>(sample_times.size());

  OdeSolution sol;
  sol.times = sample_times;
  sol.states = MatrixXd(ns, dim);
  sol.states.row(0) = x0.transpose();
  if (ns == 1) return sol;

  const double dir = sample_times(ns - 1) > sample_times(0) ? 1.0 : -1.0;
  for (int i = 1; i < ns; ++i)
    if (dir * (sample_times(i) - sample_times(i - 1)) <= 0.0)
      throw ContractViolation("integrate_ode: sample times must be strictly monotone");

  const double span = std::abs(sample_times(ns - 1) - sample_times(0));
  double h = opts.initial_step > 0.0 ? opts.initial_step : span / 100.0;
  h *= dir;

  double t = sample_times(0);
  VectorXd x = x0;
  int next_sample = 1;
  int steps = 0;

  VectorXd k[7];
  while (next_sample < ns) {
    if (++steps > opts.max_steps)
      throw SolveError("integrate_ode: step limit exceeded at t=" + std::to_string(t));

    // do not overshoot the next sample time
    const double t_target = sample_times(next_sample);
    bool lands = false;
    if (dir * (t + h - t_target) >= 0.0) {
      h = t_target - t;
      lands = true;
    }

    k[0] = f(t, x);
    for (int s = 1; s < 7; ++s) {
      VectorXd xs = x;
      for (int j = 0; j < s; ++j)
        if (kA[s][j] != 0.0) xs += (h * kA[s][j]) * k[j];
      k[s] = f(t + kC[s] * h, xs);
    }

    VectorXd x5 = x, err = VectorXd::Zero(dim);
    for (int s = 0; s < 7; ++s) {
      if (kB5[s] != 0.0) x5 += (h * kB5[s]) * k[s];
      const double db = kB5[s] - kB4[s];
      if (db != 0.0) err += (h * db) * k[s];
    }

    if (!x5.allFinite())
      throw SolveError("integrate_ode: non-finite state at t=" + std::to_string(t));

    double err_norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double scale = opts.abs_tol + opts.rel_tol * std::max(std::abs(x(i)), std::abs(x5(i)));
      err_norm = std::max(err_norm, std::abs(err(i)) / scale);
    }

    if (err_norm <= 1.0) {
      t = lands ? t_target : t + h;
      x = x5;
      if (lands) {
        sol.states.row(next_sample) = x.transpose();
        ++next_sample;
      }
    }

    const double factor =
        err_norm == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err_norm, -0.2)));
    h *= factor;
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
      throw SolveError("integrate_ode: step size collapsed at t=" + std::to_string(t));
  }
  return sol;
}

}  // namespace sdoed
