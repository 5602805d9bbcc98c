#include "sdoed/dynamics.hpp"

#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

void check_dims(const DynamicsModel& model, const VectorXd& x, const VectorXd& u,
                const VectorXd& theta, const char* where) {
  if (x.size() != model.state_dim)
    throw ContractViolation(std::string(where) + ": state has length " +
                            std::to_string(x.size()) + ", expected " +
                            std::to_string(model.state_dim));
  if (u.size() != model.control_dim)
    throw ContractViolation(std::string(where) + ": control has length " +
                            std::to_string(u.size()) + ", expected " +
                            std::to_string(model.control_dim));
  if (theta.size() != 0 && theta.size() != model.theta_dim())
    throw ContractViolation(std::string(where) + ": theta has length " +
                            std::to_string(theta.size()) + ", expected " +
                            std::to_string(model.theta_dim()) + " or 0");
}

}  // namespace

double TermFactor::value(double s) const {
  switch (fn) {
    case Fn::Power: {
      double v = 1.0;
      for (int k = 0; k < exponent; ++k) v *= s;
      return v;
    }
    case Fn::SinHalfPi:
      return std::sin(0.5 * M_PI * s);
    case Fn::CosHalfPi:
      return std::cos(0.5 * M_PI * s);
  }
  return 0.0;
}

double TermFactor::deriv(double s) const {
  switch (fn) {
    case Fn::Power: {
      if (exponent == 0) return 0.0;
      double v = static_cast<double>(exponent);
      for (int k = 0; k < exponent - 1; ++k) v *= s;
      return v;
    }
    case Fn::SinHalfPi:
      return 0.5 * M_PI * std::cos(0.5 * M_PI * s);
    case Fn::CosHalfPi:
      return -0.5 * M_PI * std::sin(0.5 * M_PI * s);
  }
  return 0.0;
}

VectorXd SurrogateComponent::gather(const VectorXd& x, const VectorXd& u) const {
  VectorXd s(input_dim());
  for (int k = 0; k < input_dim(); ++k) s(k) = inputs[k].read(x, u);
  return s;
}

double SurrogateComponent::nominal_value(const VectorXd& s) const {
  double v = 0.0;
  for (const auto& term : nominal) {
    double t = term.coeff;
    for (const auto& f : term.factors) t *= f.value(s(f.axis));
    v += t;
  }
  return v;
}

double SurrogateComponent::value(const VectorXd& s) const {
  double v = nominal_value(s);
  for (const auto& rbf : correction)
    v += rbf.coeff * std::exp(-rbf.width * (s - rbf.center).squaredNorm());
  return v;
}

VectorXd SurrogateComponent::gradient(const VectorXd& s) const {
  VectorXd g = VectorXd::Zero(input_dim());
  for (const auto& term : nominal) {
    // product rule over the factors of the term
    for (std::size_t d = 0; d < term.factors.size(); ++d) {
      double t = term.coeff;
      for (std::size_t k = 0; k < term.factors.size(); ++k) {
        const auto& f = term.factors[k];
        t *= (k == d) ? f.deriv(s(f.axis)) : f.value(s(f.axis));
      }
      g(term.factors[d].axis) += t;
    }
  }
  for (const auto& rbf : correction) {
    const VectorXd diff = s - rbf.center;
    const double e = rbf.coeff * std::exp(-rbf.width * diff.squaredNorm());
    g += (-2.0 * rbf.width * e) * diff;
  }
  return g;
}

double BasisFunction::value(const VectorXd& s) const {
  return std::exp(-width * (s - center).squaredNorm());
}

VectorXd BasisFunction::gradient(const VectorXd& s) const {
  const VectorXd diff = s - center;
  return (-2.0 * width * std::exp(-width * diff.squaredNorm())) * diff;
}

VectorXd perturbation_factor(const ModelSurrogate& surrogate, const PerturbationBasis& basis,
                             const VectorXd& theta, const VectorXd& x, const VectorXd& u) {
  const int ell = surrogate.output_dim();
  VectorXd p = VectorXd::Ones(ell);
  if (theta.size() == 0) return p;
  if (theta.size() != basis.dimension())
    throw ContractViolation("perturbation_factor: theta has length " +
                            std::to_string(theta.size()) + ", expected " +
                            std::to_string(basis.dimension()));
  for (int i = 0; i < basis.dimension(); ++i) {
    const auto& phi = basis.functions[i];
    if (phi.component < 0 || phi.component >= ell)
      throw ContractViolation("perturbation_factor: basis function " + std::to_string(i) +
                              " references component " + std::to_string(phi.component));
    if (theta(i) == 0.0) continue;
    const VectorXd s = surrogate.components[phi.component].gather(x, u);
    p(phi.component) += theta(i) * phi.value(s);
  }
  return p;
}

VectorXd eval_g(const DynamicsModel& model, const VectorXd& x, const VectorXd& u,
                const VectorXd& theta) {
  const int ell = model.output_dim();
  VectorXd g(ell);
  for (int k = 0; k < ell; ++k) {
    const auto& comp = model.surrogate.components[k];
    g(k) = comp.value(comp.gather(x, u));
  }
  if (theta.size() != 0) {
    const VectorXd p = perturbation_factor(model.surrogate, model.basis, theta, x, u);
    g = p.cwiseProduct(g);
  }
  return g;
}

VectorXd eval_rhs(const DynamicsModel& model, double t, const VectorXd& x, const VectorXd& u,
                  const VectorXd& theta) {
  check_dims(model, x, u, theta, "eval_rhs");
  const VectorXd g = eval_g(model, x, u, theta);
  VectorXd f = model.rhs(t, x, u, g);
  if (f.size() != model.state_dim)
    throw ContractViolation("eval_rhs: rhs returned length " + std::to_string(f.size()));
  for (int k = 0; k < f.size(); ++k) {
    if (!std::isfinite(f(k)))
      throw EvaluationError("eval_rhs: non-finite derivative in component " +
                            (k < static_cast<int>(model.state_names.size())
                                 ? model.state_names[k]
                                 : std::to_string(k)) +
                            " at t=" + std::to_string(t));
  }
  return f;
}

OutputLinearization linearize_output(const DynamicsModel& model, const VectorXd& x,
                                     const VectorXd& u, const VectorXd& theta) {
  const int n = model.state_dim, m = model.control_dim;
  const int ell = model.output_dim();
  const int q = model.theta_dim();
  const bool perturbed = theta.size() != 0;

  OutputLinearization out;
  out.value = VectorXd::Zero(ell);
  out.wrt_state = MatrixXd::Zero(ell, n);
  out.wrt_control = MatrixXd::Zero(ell, m);
  out.wrt_theta = MatrixXd::Zero(ell, q);

  // Per-component bookkeeping for the theta chain.
  std::vector<double> comp_value(ell), comp_p(ell, 1.0);
  std::vector<VectorXd> comp_s(ell), comp_grad(ell);

  for (int k = 0; k < ell; ++k) {
    const auto& comp = model.surrogate.components[k];
    comp_s[k] = comp.gather(x, u);
    comp_value[k] = comp.value(comp_s[k]);
    comp_grad[k] = comp.gradient(comp_s[k]);
  }

  // dp_k/ds accumulated over the block's basis functions.
  std::vector<VectorXd> p_grad(ell);
  for (int k = 0; k < ell; ++k)
    p_grad[k] = VectorXd::Zero(model.surrogate.components[k].input_dim());
  if (perturbed) {
    for (int i = 0; i < q; ++i) {
      const auto& phi = model.basis.functions[i];
      if (theta(i) == 0.0) continue;
      comp_p[phi.component] += theta(i) * phi.value(comp_s[phi.component]);
      p_grad[phi.component] += theta(i) * phi.gradient(comp_s[phi.component]);
    }
  }

  for (int k = 0; k < ell; ++k) {
    const auto& comp = model.surrogate.components[k];
    out.value(k) = comp_p[k] * comp_value[k];
    // d(p_k g_k)/ds, then chain through the affine input reads
    VectorXd dval_ds = comp_p[k] * comp_grad[k];
    if (perturbed) dval_ds += comp_value[k] * p_grad[k];
    for (int a = 0; a < comp.input_dim(); ++a) {
      const auto& in = comp.inputs[a];
      if (in.source == GInput::Source::State)
        out.wrt_state(k, in.index) += dval_ds(a) * in.scale;
      else
        out.wrt_control(k, in.index) += dval_ds(a) * in.scale;
    }
  }

  // d(p_k g_k)/dtheta_i = phi_i(s) g_k(s) for i in component k's block.
  for (int i = 0; i < q && q > 0; ++i) {
    const auto& phi = model.basis.functions[i];
    out.wrt_theta(phi.component, i) = phi.value(comp_s[phi.component]) * comp_value[phi.component];
  }
  return out;
}

Linearization linearize(const DynamicsModel& model, double t, const VectorXd& x,
                        const VectorXd& u, const VectorXd& theta) {
  check_dims(model, x, u, theta, "linearize");
  const OutputLinearization g = linearize_output(model, x, u, theta);

  const MatrixXd fx = model.rhs_jac_state(t, x, u, g.value);
  const MatrixXd fu = model.rhs_jac_control(t, x, u, g.value);
  const MatrixXd fg = model.rhs_jac_output(t, x, u, g.value);

  Linearization lin;
  lin.wrt_state = fx + fg * g.wrt_state;
  lin.wrt_control = fu + fg * g.wrt_control;
  lin.wrt_theta = fg * g.wrt_theta;

  if (!lin.wrt_state.allFinite() || !lin.wrt_control.allFinite() || !lin.wrt_theta.allFinite())
    throw EvaluationError("linearize: non-finite Jacobian entry at t=" + std::to_string(t));
  return lin;
}

}  // namespace sdoed
