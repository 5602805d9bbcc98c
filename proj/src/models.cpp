#include "sdoed/models.hpp"

#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

DynamicsModel make_zermelo_model(const ZermeloParams& params) {
  DynamicsModel model;
  model.state_dim = 2;
  model.control_dim = 1;
  model.state_names = {"x1", "x2"};
  model.control_names = {"u"};

  SurrogateComponent current;
  current.name = "current";
  current.inputs = {GInput{GInput::Source::State, 0, 1.0, "x1"}};
  current.nominal = params.current;
  model.surrogate.components.push_back(current);

  model.rhs = [](double, const VectorXd& x, const VectorXd& u, const VectorXd& g) {
    VectorXd f(2);
    f(0) = std::cos(u(0)) + g(0) * x(1);
    f(1) = std::sin(u(0));
    return f;
  };
  model.rhs_jac_state = [](double, const VectorXd&, const VectorXd&, const VectorXd& g) {
    MatrixXd fx = MatrixXd::Zero(2, 2);
    fx(0, 1) = g(0);
    return fx;
  };
  model.rhs_jac_control = [](double, const VectorXd&, const VectorXd& u, const VectorXd&) {
    MatrixXd fu(2, 1);
    fu(0, 0) = -std::sin(u(0));
    fu(1, 0) = std::cos(u(0));
    return fu;
  };
  model.rhs_jac_output = [](double, const VectorXd& x, const VectorXd&, const VectorXd&) {
    MatrixXd fg(2, 1);
    fg(0, 0) = x(1);
    fg(1, 0) = 0.0;
    return fg;
  };

  model.control_lower = VectorXd::Constant(1, params.heading_min);
  model.control_upper = VectorXd::Constant(1, params.heading_max);
  model.state_lower = VectorXd::Constant(2, -1e30);
  model.state_upper = VectorXd::Constant(2, 1e30);
  return model;
}

namespace {

// Aerodynamic forces and the pieces of their chain rule shared by the glide
// right-hand side, its Jacobians, and the load-factor path constraint.
struct GlideForces {
  double rho, qd;
  double sa, ca_, sb, cb;
  double FN, FA, FY;
  double A1;  // FN sin(a) + FA cos(a)
  double D, L, S;
};

GlideForces glide_forces(const GlideParams& p, const VectorXd& x, const VectorXd& u,
                         const VectorXd& g) {
  GlideForces f;
  f.rho = p.rho0 * std::exp(x(2) / p.scale_height);
  f.qd = 0.5 * f.rho * x(3) * x(3);
  f.sa = std::sin(u(0));
  f.ca_ = std::cos(u(0));
  f.sb = std::sin(u(1));
  f.cb = std::cos(u(1));
  const double qa = f.qd * p.area_ref;
  f.FN = qa * g(0);
  f.FA = qa * g(1);
  f.FY = qa * g(2);
  f.A1 = f.FN * f.sa + f.FA * f.ca_;
  f.D = f.A1 * f.cb - f.FY * f.sb;
  f.L = f.FN * f.ca_ - f.FA * f.sa;
  f.S = f.A1 * f.sb + f.FY * f.cb;
  return f;
}

void glide_check_admissible(const GlideParams& p, const VectorXd& x) {
  if (!(x(3) >= p.v_min))
    throw EvaluationError("glide model: velocity " + std::to_string(x(3)) +
                          " below admissible minimum");
  if (std::abs(std::cos(x(4))) < 1e-9)
    throw EvaluationError("glide model: flight-path angle at +-pi/2, azimuth rate undefined");
}

}  // namespace

DynamicsModel make_glide_model(const GlideParams& p) {
  DynamicsModel model;
  model.state_dim = 6;
  model.control_dim = 3;
  model.state_names = {"x", "y", "z", "v", "gamma", "psi"};
  model.control_names = {"alpha", "beta", "phi"};

  const GInput mach{GInput::Source::State, 3, 1.0 / p.sound_speed, "M"};
  const GInput alpha{GInput::Source::Control, 0, 1.0, "alpha"};
  const GInput beta{GInput::Source::Control, 1, 1.0, "beta"};

  SurrogateComponent cn, ca, cy;
  cn.name = "CN";
  cn.inputs = {mach, alpha};
  cn.nominal = p.cn;
  ca.name = "CA";
  ca.inputs = {mach, alpha};
  ca.nominal = p.ca;
  cy.name = "CY";
  cy.inputs = {mach, alpha, beta};
  cy.nominal = p.cy;
  model.surrogate.components = {cn, ca, cy};

  model.rhs = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd& g) {
    glide_check_admissible(p, x);
    const GlideForces F = glide_forces(p, x, u, g);
    const double v = x(3), gam = x(4), psi = x(5);
    const double sg = std::sin(gam), cg = std::cos(gam);
    const double sphi = std::sin(u(2)), cphi = std::cos(u(2));
    const double LC = F.L * cphi - F.S * sphi;
    const double LS = F.L * sphi + F.S * cphi;
    VectorXd f(6);
    f(0) = v * cg * std::cos(psi);
    f(1) = v * cg * std::sin(psi);
    f(2) = -v * sg;
    f(3) = -F.D / p.mass - p.gravity * sg;
    f(4) = LC / (p.mass * v) - p.gravity * cg / v;
    f(5) = LS / (p.mass * v * cg);
    return f;
  };

  model.rhs_jac_state = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd& g) {
    glide_check_admissible(p, x);
    const GlideForces F = glide_forces(p, x, u, g);
    const double v = x(3), gam = x(4), psi = x(5);
    const double sg = std::sin(gam), cg = std::cos(gam);
    const double sp = std::sin(psi), cp = std::cos(psi);
    const double sphi = std::sin(u(2)), cphi = std::cos(u(2));
    const double LC = F.L * cphi - F.S * sphi;
    const double LS = F.L * sphi + F.S * cphi;
    const double H = p.scale_height, m = p.mass, grav = p.gravity;

    MatrixXd fx = MatrixXd::Zero(6, 6);
    fx(0, 3) = cg * cp;
    fx(0, 4) = -v * sg * cp;
    fx(0, 5) = -v * cg * sp;
    fx(1, 3) = cg * sp;
    fx(1, 4) = -v * sg * sp;
    fx(1, 5) = v * cg * cp;
    fx(2, 3) = -sg;
    fx(2, 4) = -v * cg;
    // forces scale with dynamic pressure: d/dz = val/H, d/dv = 2 val/v
    fx(3, 2) = -(F.D / H) / m;
    fx(3, 3) = -(2.0 * F.D / v) / m;
    fx(3, 4) = -grav * cg;
    fx(4, 2) = LC / (m * v * H);
    fx(4, 3) = LC / (m * v * v) + grav * cg / (v * v);
    fx(4, 4) = grav * sg / v;
    fx(5, 2) = LS / (m * v * cg * H);
    fx(5, 3) = LS / (m * v * v * cg);
    fx(5, 4) = LS * sg / (m * v * cg * cg);
    return fx;
  };

  model.rhs_jac_control = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd& g) {
    glide_check_admissible(p, x);
    const GlideForces F = glide_forces(p, x, u, g);
    const double v = x(3), cg = std::cos(x(4));
    const double sphi = std::sin(u(2)), cphi = std::cos(u(2));
    const double m = p.mass;
    // dD/da = L cb, dL/da = -A1, dS/da = L sb
    // dD/db = -S,   dL/db = 0,   dS/db = D
    const double dD_da = F.L * F.cb, dL_da = -F.A1, dS_da = F.L * F.sb;
    const double dD_db = -F.S, dS_db = F.D;
    const double LC = F.L * cphi - F.S * sphi;
    const double LS = F.L * sphi + F.S * cphi;

    MatrixXd fu = MatrixXd::Zero(6, 3);
    fu(3, 0) = -dD_da / m;
    fu(3, 1) = -dD_db / m;
    fu(4, 0) = (dL_da * cphi - dS_da * sphi) / (m * v);
    fu(4, 1) = (-dS_db * sphi) / (m * v);
    fu(4, 2) = -LS / (m * v);
    fu(5, 0) = (dL_da * sphi + dS_da * cphi) / (m * v * cg);
    fu(5, 1) = (dS_db * cphi) / (m * v * cg);
    fu(5, 2) = LC / (m * v * cg);
    return fu;
  };

  model.rhs_jac_output = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd&) {
    glide_check_admissible(p, x);
    const double rho = p.rho0 * std::exp(x(2) / p.scale_height);
    const double qa = 0.5 * rho * x(3) * x(3) * p.area_ref;
    const double sa = std::sin(u(0)), ca_ = std::cos(u(0));
    const double sb = std::sin(u(1)), cb = std::cos(u(1));
    const double sphi = std::sin(u(2)), cphi = std::cos(u(2));
    const double v = x(3), cg = std::cos(x(4)), m = p.mass;

    // force partials in the coefficients
    const double dD[3] = {qa * sa * cb, qa * ca_ * cb, -qa * sb};
    const double dL[3] = {qa * ca_, -qa * sa, 0.0};
    const double dS[3] = {qa * sa * sb, qa * ca_ * sb, qa * cb};

    MatrixXd fg = MatrixXd::Zero(6, 3);
    for (int j = 0; j < 3; ++j) {
      fg(3, j) = -dD[j] / m;
      fg(4, j) = (dL[j] * cphi - dS[j] * sphi) / (m * v);
      fg(5, j) = (dL[j] * sphi + dS[j] * cphi) / (m * v * cg);
    }
    return fg;
  };

  model.control_lower = p.control_lower.size() == 3 ? p.control_lower : VectorXd::Constant(3, -1e30);
  model.control_upper = p.control_upper.size() == 3 ? p.control_upper : VectorXd::Constant(3, 1e30);
  model.state_lower = VectorXd::Constant(6, -1e30);
  model.state_upper = VectorXd::Constant(6, 1e30);
  model.state_lower(3) = p.v_min;

  // path constraints, eta <= 0
  if (p.heat_max < 1e29) {
    PathConstraint c;
    c.name = "heating";
    c.value = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&) {
      const double rho = p.rho0 * std::exp(x(2) / p.scale_height);
      return p.heat_coeff * std::sqrt(rho) * x(3) * x(3) * x(3) - p.heat_max;
    };
    c.gradient = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&, VectorXd& dx,
                     VectorXd& du, VectorXd& dg) {
      const double rho = p.rho0 * std::exp(x(2) / p.scale_height);
      const double val = p.heat_coeff * std::sqrt(rho) * x(3) * x(3) * x(3);
      dx = VectorXd::Zero(6);
      du = VectorXd::Zero(3);
      dg = VectorXd::Zero(3);
      dx(2) = 0.5 * val / p.scale_height;
      dx(3) = 3.0 * val / x(3);
    };
    model.path_constraints.push_back(c);
  }
  if (p.dyn_pressure_max < 1e29) {
    PathConstraint c;
    c.name = "dynamic_pressure";
    c.value = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&) {
      const double rho = p.rho0 * std::exp(x(2) / p.scale_height);
      return 0.5 * rho * x(3) * x(3) - p.dyn_pressure_max;
    };
    c.gradient = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&, VectorXd& dx,
                     VectorXd& du, VectorXd& dg) {
      const double rho = p.rho0 * std::exp(x(2) / p.scale_height);
      const double qd = 0.5 * rho * x(3) * x(3);
      dx = VectorXd::Zero(6);
      du = VectorXd::Zero(3);
      dg = VectorXd::Zero(3);
      dx(2) = qd / p.scale_height;
      dx(3) = rho * x(3);
    };
    model.path_constraints.push_back(c);
  }
  if (p.load_max < 1e29) {
    PathConstraint c;
    c.name = "load_factor";
    c.value = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd& g) {
      const GlideForces F = glide_forces(p, x, u, g);
      return std::sqrt(F.L * F.L + F.D * F.D) / p.mass - p.load_max;
    };
    c.gradient = [p](double, const VectorXd& x, const VectorXd& u, const VectorXd& g, VectorXd& dx,
                     VectorXd& du, VectorXd& dg) {
      const GlideForces F = glide_forces(p, x, u, g);
      const double norm = std::max(std::sqrt(F.L * F.L + F.D * F.D), 1e-12);
      const double wL = F.L / (norm * p.mass), wD = F.D / (norm * p.mass);
      dx = VectorXd::Zero(6);
      du = VectorXd::Zero(3);
      dg = VectorXd::Zero(3);
      dx(2) = (wL * F.L + wD * F.D) / p.scale_height;
      dx(3) = 2.0 * (wL * F.L + wD * F.D) / x(3);
      const double dD_da = F.L * F.cb, dL_da = -F.A1, dS_da = F.L * F.sb;
      (void)dS_da;
      du(0) = wL * dL_da + wD * dD_da;
      du(1) = wD * (-F.S);
      const double qa = F.qd * p.area_ref;
      const double dD_dc[3] = {qa * F.sa * F.cb, qa * F.ca_ * F.cb, -qa * F.sb};
      const double dL_dc[3] = {qa * F.ca_, -qa * F.sa, 0.0};
      for (int j = 0; j < 3; ++j) dg(j) = wL * dL_dc[j] + wD * dD_dc[j];
    };
    model.path_constraints.push_back(c);
  }
  if (p.nofly_enabled) {
    PathConstraint c;
    c.name = "no_fly_zone";
    c.value = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&) {
      const double dx0 = x(0) - p.nofly_x, dy0 = x(1) - p.nofly_y;
      return p.nofly_radius * p.nofly_radius - dx0 * dx0 - dy0 * dy0;
    };
    c.gradient = [p](double, const VectorXd& x, const VectorXd&, const VectorXd&, VectorXd& dx,
                     VectorXd& du, VectorXd& dg) {
      dx = VectorXd::Zero(6);
      du = VectorXd::Zero(3);
      dg = VectorXd::Zero(3);
      dx(0) = -2.0 * (x(0) - p.nofly_x);
      dx(1) = -2.0 * (x(1) - p.nofly_y);
    };
    model.path_constraints.push_back(c);
  }
  return model;
}

void attach_uniform_basis_1d(DynamicsModel& model, int component, double lo, double hi, int count,
                             double width) {
  if (count < 1) throw ContractViolation("attach_uniform_basis_1d: count must be positive");
  if (width <= 0) throw ContractViolation("attach_uniform_basis_1d: width must be positive");
  if (component < 0 || component >= model.output_dim())
    throw ContractViolation("attach_uniform_basis_1d: bad component index");
  for (int i = 0; i < count; ++i) {
    BasisFunction f;
    f.component = component;
    f.center = VectorXd::Constant(1, count == 1 ? 0.5 * (lo + hi)
                                                : lo + (hi - lo) * i / (count - 1.0));
    f.width = width;
    model.basis.functions.push_back(f);
  }
}

void attach_grid_basis(DynamicsModel& model, int component, const std::vector<VectorXd>& axis_grids,
                       double width) {
  if (component < 0 || component >= model.output_dim())
    throw ContractViolation("attach_grid_basis: bad component index");
  const auto& comp = model.surrogate.components[component];
  if (static_cast<int>(axis_grids.size()) != comp.input_dim())
    throw ContractViolation("attach_grid_basis: one grid per input axis required");
  if (width <= 0) throw ContractViolation("attach_grid_basis: width must be positive");

  std::vector<int> idx(axis_grids.size(), 0);
  while (true) {
    BasisFunction f;
    f.component = component;
    f.center = VectorXd(axis_grids.size());
    for (std::size_t a = 0; a < axis_grids.size(); ++a) f.center(a) = axis_grids[a](idx[a]);
    f.width = width;
    model.basis.functions.push_back(f);

    int a = static_cast<int>(axis_grids.size()) - 1;
    while (a >= 0) {
      if (++idx[a] < axis_grids[a].size()) break;
      idx[a] = 0;
      --a;
    }
    if (a < 0) break;
  }
}

}  // namespace sdoed
