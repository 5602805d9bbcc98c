#ifndef SDOED_DYNAMICS_HPP
#define SDOED_DYNAMICS_HPP

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace sdoed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One scalar input axis of a model component: an affine read of a single
// state or control coordinate (e.g. Mach = v / a0 reads the velocity state
// with scale 1/a0).
struct GInput {
  enum class Source { State, Control };
  Source source = Source::State;
  int index = 0;
  double scale = 1.0;
  std::string name;

  double read(const VectorXd& x, const VectorXd& u) const {
    return scale * (source == Source::State ? x(index) : u(index));
  }
};

// Factor of a dictionary term, acting on one input axis.
struct TermFactor {
  enum class Fn { Power, SinHalfPi, CosHalfPi };
  int axis = 0;
  Fn fn = Fn::Power;
  int exponent = 1;

  double value(double s) const;
  double deriv(double s) const;
};

// coeff * prod_k factor_k(s)
struct DictTerm {
  double coeff = 0.0;
  std::vector<TermFactor> factors;
};

// coeff * exp(-width * |s - center|^2)
struct RbfTerm {
  VectorXd center;
  double width = 1.0;
  double coeff = 0.0;
};

// One component g_k of the model: nominal dictionary expansion plus fitted
// radial-basis corrections, over its own reduced input space s(x, u).
struct SurrogateComponent {
  std::string name;
  std::vector<GInput> inputs;
  std::vector<DictTerm> nominal;
  std::vector<RbfTerm> correction;

  int input_dim() const { return static_cast<int>(inputs.size()); }
  VectorXd gather(const VectorXd& x, const VectorXd& u) const;

  double nominal_value(const VectorXd& s) const;
  double value(const VectorXd& s) const;
  VectorXd gradient(const VectorXd& s) const;  // d(value)/ds
};

struct ModelSurrogate {
  std::vector<SurrogateComponent> components;
  int output_dim() const { return static_cast<int>(components.size()); }
};

// Gaussian basis function parameterizing model error in one component's
// input space; its center doubles as the theta coordinate's anchor point.
struct BasisFunction {
  int component = 0;
  VectorXd center;
  double width = 1.0;

  double value(const VectorXd& s) const;
  VectorXd gradient(const VectorXd& s) const;
};

struct PerturbationBasis {
  std::vector<BasisFunction> functions;  // ordered by component block

  int dimension() const { return static_cast<int>(functions.size()); }
};

// Inequality path constraint eta(t, x, u, g) <= 0 with analytic gradients.
struct PathConstraint {
  std::string name;
  std::function<double(double, const VectorXd&, const VectorXd&, const VectorXd&)> value;
  std::function<void(double, const VectorXd&, const VectorXd&, const VectorXd&, VectorXd&,
                     VectorXd&, VectorXd&)>
      gradient;  // fills d/dx, d/du, d/dg
};

// ODE right-hand side xdot = f(t, x, u, g(x,u)) with analytic partials taken
// at a frozen g-value; the g chain is closed by linearize().
struct DynamicsModel {
  int state_dim = 0;
  int control_dim = 0;

  std::function<VectorXd(double, const VectorXd&, const VectorXd&, const VectorXd&)> rhs;
  std::function<MatrixXd(double, const VectorXd&, const VectorXd&, const VectorXd&)> rhs_jac_state;
  std::function<MatrixXd(double, const VectorXd&, const VectorXd&, const VectorXd&)> rhs_jac_control;
  std::function<MatrixXd(double, const VectorXd&, const VectorXd&, const VectorXd&)> rhs_jac_output;
  // Partial of f in its explicit time argument; empty means autonomous.
  std::function<VectorXd(double, const VectorXd&, const VectorXd&, const VectorXd&)> rhs_jac_time;

  ModelSurrogate surrogate;
  PerturbationBasis basis;

  VectorXd control_lower, control_upper;  // size m; +-inf when unbounded
  VectorXd state_lower, state_upper;      // size n; +-inf when unbounded
  std::vector<PathConstraint> path_constraints;

  std::vector<std::string> state_names, control_names;

  int output_dim() const { return surrogate.output_dim(); }
  int theta_dim() const { return basis.dimension(); }
};

// Diagonal entries p_k(theta^k; x, u) = 1 + sum_i theta_i^k phi_i^k(x, u).
VectorXd perturbation_factor(const ModelSurrogate& surrogate, const PerturbationBasis& basis,
                             const VectorXd& theta, const VectorXd& x, const VectorXd& u);

// P(theta) * g(x, u). theta may be empty (treated as zero).
VectorXd eval_g(const DynamicsModel& model, const VectorXd& x, const VectorXd& u,
                const VectorXd& theta);

// f(t, x, u, P(theta) g(x, u)).
VectorXd eval_rhs(const DynamicsModel& model, double t, const VectorXd& x, const VectorXd& u,
                  const VectorXd& theta);

struct Linearization {
  MatrixXd wrt_state;    // n x n, includes g's state dependence
  MatrixXd wrt_control;  // n x m, includes g's control dependence
  MatrixXd wrt_theta;    // n x q
};

Linearization linearize(const DynamicsModel& model, double t, const VectorXd& x,
                        const VectorXd& u, const VectorXd& theta);

// Value and gradients of the perturbed model output, d(P(theta) g)/d(x,u,theta).
struct OutputLinearization {
  VectorXd value;        // ell
  MatrixXd wrt_state;    // ell x n
  MatrixXd wrt_control;  // ell x m
  MatrixXd wrt_theta;    // ell x q
};

OutputLinearization linearize_output(const DynamicsModel& model, const VectorXd& x,
                                     const VectorXd& u, const VectorXd& theta);

}  // namespace sdoed

#endif
