#ifndef SDOED_LQR_HPP
#define SDOED_LQR_HPP

#include <vector>

#include "sdoed/nlp.hpp"
#include "sdoed/ode.hpp"

namespace sdoed {

struct LqrWeights {
  MatrixXd Q;   // state weight, PSD
  MatrixXd R;   // control weight, PD
  MatrixXd Qf;  // terminal weight, PSD
};

// Time-varying feedback gains around a reference trajectory; P and K stored
// on a dense time base, K linearly interpolated in between.
struct GainSchedule {
  VectorXd times;  // ascending over [0, T]
  std::vector<MatrixXd> gains;
  std::vector<MatrixXd> riccati;
  LqrWeights weights;

  MatrixXd gain_at(double t) const;
};

struct RiccatiOptions {
  int store_points = 201;
  double norm_cap = 1e8;  // blow-up guard on |P|
  OdeOptions ode;
};

// Backward differential Riccati integration along the linearization of the
// nominal-model dynamics about the reference; K = R^{-1} B' P.
GainSchedule solve_riccati(const OcpProblem& ocp, const DiscreteSolution& reference,
                           const LqrWeights& weights, const RiccatiOptions& opts = {});

struct SimulationOptions {
  int samples = 401;
  OdeOptions ode;
};

struct SimulationResult {
  VectorXd times;
  MatrixXd states;             // one row per sample
  MatrixXd controls_applied;   // after clipping to the control box
  MatrixXd controls_demanded;  // before clipping
  MatrixXd reference_states;
  MatrixXd reference_controls;
  std::vector<std::vector<bool>> clipped;  // [sample][channel]
  std::vector<bool> channel_violated;      // any clip per channel
  double tracking_error = 0.0;   // integral of |x - xref|^2
  double control_effort = 0.0;   // integral of |u_applied - uref|^2
  double demand_effort = 0.0;    // integral of |u_demanded - uref|^2
};

// Integrate the truth-model dynamics under the reference control plus (when
// gains are given) the LQR correction -K(t)(x - xref(t)), saturated at the
// reference model's control box. Functionals accumulate as quadrature states
// inside the integrator, so they carry its tolerance.
SimulationResult simulate_closed_loop(const OcpProblem& ref_ocp, const DiscreteSolution& reference,
                                      const DynamicsModel& truth, const GainSchedule* gains,
                                      const SimulationOptions& opts = {});

}  // namespace sdoed

#endif
