#ifndef SDOED_COLLOCATION_HPP
#define SDOED_COLLOCATION_HPP

#include <Eigen/Core>
#include <vector>

#include "sdoed/dynamics.hpp"

namespace sdoed {

// Legendre-Gauss-Lobatto rule with n_nodes points on [-1, 1]. Quadrature is
// exact for polynomials of degree <= 2*n_nodes - 3.
struct LglRule {
  VectorXd nodes;
  VectorXd weights;
};
LglRule lgl_rule(int n_nodes);

// Differentiation matrix for Lagrange interpolation at the given nodes;
// diagonal entries are set to the negated off-diagonal row sums, so row sums
// vanish identically.
MatrixXd differentiation_matrix(const VectorXd& nodes);

// Barycentric weights for the node set (used for stable interpolation).
VectorXd barycentric_weights(const VectorXd& nodes);

struct Subinterval {
  double left = 0.0, right = 0.0;
  int order = 0;                // number of LGL nodes
  std::vector<int> node_index;  // global node indices, length `order`
  VectorXd local_weights;       // quadrature weights scaled to [left, right]
  MatrixXd diff;                // order x order differentiation matrix on [left, right]
  VectorXd bary;
};

// Partitioned mesh of [t0, tp] with shared interface nodes, summed interface
// quadrature weights, and per-subinterval differentiation matrices.
class TimeGrid {
public:
  static TimeGrid build(const std::vector<double>& boundaries, const std::vector<int>& orders);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int interval_count() const { return static_cast<int>(subs_.size()); }
  double domain_start() const { return boundaries_.front(); }
  double domain_end() const { return boundaries_.back(); }
  double domain_length() const { return domain_end() - domain_start(); }

  const VectorXd& nodes() const { return nodes_; }
  const VectorXd& weights() const { return weights_; }
  const Subinterval& interval(int i) const { return subs_[i]; }
  const std::vector<double>& boundaries() const { return boundaries_; }
  std::vector<int> orders() const;

  // Index of the subinterval containing tau (interfaces resolve to the left
  // interval, except tau = t0 which lands in interval 0).
  int locate(double tau) const;

  // Integral over the grid domain of nodal values: sum_i w_i v_i.
  double quadrature(const VectorXd& node_values) const;

  // Values of an ncomp-component coefficient vector (component-major layout,
  // coeffs[k * node_count() + i]) interpolated at tau.
  VectorXd interpolate(const VectorXd& coeffs, int ncomp, double tau) const;

  // Derivative (in the grid coordinate) of the interpolant at tau.
  VectorXd interpolate_derivative(const VectorXd& coeffs, int ncomp, double tau) const;

  // Derivative of the interpolating polynomial evaluated at every node of
  // every subinterval, stacked as rows (interval-major, then local node);
  // shared interface nodes appear once per adjacent interval.
  MatrixXd differentiation_apply(const VectorXd& coeffs, int ncomp) const;

private:
  std::vector<double> boundaries_;
  std::vector<Subinterval> subs_;
  VectorXd nodes_;
  VectorXd weights_;
};

struct ResidualJacobians {
  MatrixXd wrt_y;      // nN x nN
  MatrixXd wrt_z;      // nN x mN
  MatrixXd wrt_theta;  // nN x q
  VectorXd wrt_T;      // nN
};

// Stacked collocation system (r_coll; r_init; r_inter) for the dynamics
// scaled onto the grid domain: physical time t = tau * T / L with
// L = grid.domain_length(), so dx/dtau = (T/L) f(t, x, u, g). For fixed
// final-time problems pass T = L.
VectorXd assemble_residual(const TimeGrid& grid, const VectorXd& y, const VectorXd& z, double T,
                           const DynamicsModel& model, const VectorXd& theta, const VectorXd& x0,
                           ResidualJacobians* jac = nullptr);

}  // namespace sdoed

#endif
