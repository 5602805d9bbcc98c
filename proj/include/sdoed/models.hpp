#ifndef SDOED_MODELS_HPP
#define SDOED_MODELS_HPP

#include <vector>

#include "sdoed/dynamics.hpp"

namespace sdoed {

// River navigation: states (x1, x2) downstream/offshore position, control u
// is the boat heading. x1dot = cos(u) + g(x1) x2, x2dot = sin(u); the scalar
// g models the current profile along the river.
struct ZermeloParams {
  std::vector<DictTerm> current;  // g(x1) over the 1-D dictionary
  double heading_min = -M_PI;
  double heading_max = M_PI;
};

DynamicsModel make_zermelo_model(const ZermeloParams& params);

// 3-DOF point-mass glide vehicle in north/east/down coordinates with
// velocity, flight-path angle, and azimuth states; controls are
// angle-of-attack, sideslip, and roll. Aerodynamic coefficients
// (C_N(M, alpha), C_A(M, alpha), C_Y(M, alpha, beta)) come from synthetic
// configuration tables; density is exponential in the down coordinate.
struct GlideParams {
  double mass = 1.0;
  double area_ref = 1.0;
  double rho0 = 1.0;
  double scale_height = 0.25;  // H in rho = rho0 exp(z / H)
  double gravity = 0.25;
  double sound_speed = 0.2;  // a0 in M = v / a0
  double heat_coeff = 1.0;   // k_Q

  double heat_max = 1e30;
  double dyn_pressure_max = 1e30;
  double load_max = 1e30;

  bool nofly_enabled = false;
  double nofly_x = 0.0, nofly_y = 0.0, nofly_radius = 0.0;

  std::vector<DictTerm> cn, ca, cy;  // tables over (M, alpha[, beta])

  VectorXd control_lower, control_upper;  // (alpha, beta, phi)
  double v_min = 1e-3;                    // admissibility guard
};

DynamicsModel make_glide_model(const GlideParams& params);

// Attach a uniform 1-D Gaussian perturbation basis to a single-input
// component (Zermelo current): `count` centers equally spaced on [lo, hi].
void attach_uniform_basis_1d(DynamicsModel& model, int component, double lo, double hi, int count,
                             double width);

// Attach a tensor-grid Gaussian basis over a component's input space.
void attach_grid_basis(DynamicsModel& model, int component, const std::vector<VectorXd>& axis_grids,
                       double width);

}  // namespace sdoed

#endif
