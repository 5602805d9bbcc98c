#include "sdoed/collocation.hpp"

#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

// Legendre P_n(x) and its first derivative by recurrence.
void legendre(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  double d0 = 0.0, d1 = 1.0;
  if (n == 0) {
    p = p0;
    dp = d0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    const double d2 = d0 + (2.0 * k - 1.0) * p1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
  }
  p = p1;
  dp = d1;
}

}  // namespace

LglRule lgl_rule(int n_nodes) {
  if (n_nodes < 2) throw ContractViolation("lgl_rule: need at least 2 nodes");
  const int n = n_nodes - 1;  // Legendre degree
  LglRule rule;
  rule.nodes = VectorXd(n_nodes);
  rule.weights = VectorXd(n_nodes);

  rule.nodes(0) = -1.0;
  rule.nodes(n) = 1.0;

  // Interior nodes: roots of P'_n, Newton from Chebyshev-Gauss-Lobatto guesses.
  for (int i = 1; i < n; ++i) {
    double x = -std::cos(M_PI * i / n);
    for (int it = 0; it < 100; ++it) {
      double p, dp;
      legendre(n, x, p, dp);
      // P''_n from the Legendre ODE: (1-x^2) P'' = 2x P' - n(n+1) P
      const double ddp = (2.0 * x * dp - n * (n + 1.0) * p) / (1.0 - x * x);
      const double step = dp / ddp;
      x -= step;
      if (std::abs(step) < 1e-14) break;
    }
    rule.nodes(i) = x;
  }
  // enforce symmetry exactly
  for (int i = 0; i < n_nodes / 2; ++i) {
    const double s = 0.5 * (rule.nodes(i) - rule.nodes(n - i));
    rule.nodes(i) = s;
    rule.nodes(n - i) = -s;
  }
  if (n_nodes % 2 == 1) rule.nodes(n / 2) = 0.0;

  for (int i = 0; i < n_nodes; ++i) {
    double p, dp;
    legendre(n, rule.nodes(i), p, dp);
    rule.weights(i) = 2.0 / (n * (n + 1.0) * p * p);
  }
  return rule;
}

VectorXd barycentric_weights(const VectorXd& nodes) {
  const int n = static_cast<int>(nodes.size());
  VectorXd b = VectorXd::Ones(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) b(i) /= (nodes(i) - nodes(j));
  return b;
}

MatrixXd differentiation_matrix(const VectorXd& nodes) {
  const int n = static_cast<int>(nodes.size());
  const VectorXd b = barycentric_weights(nodes);
  MatrixXd d(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      d(i, j) = (b(j) / b(i)) / (nodes(i) - nodes(j));
      diag -= d(i, j);
    }
    d(i, i) = diag;
  }
  return d;
}

TimeGrid TimeGrid::build(const std::vector<double>& boundaries, const std::vector<int>& orders) {
  if (boundaries.size() < 2) throw ContractViolation("TimeGrid: need at least 2 boundaries");
  if (orders.size() != boundaries.size() - 1)
    throw ContractViolation("TimeGrid: orders count must equal subinterval count");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1]))
      throw ContractViolation("TimeGrid: boundaries must be strictly increasing");
  for (int o : orders)
    if (o < 2) throw ContractViolation("TimeGrid: subinterval order must be >= 2");

  TimeGrid grid;
  grid.boundaries_ = boundaries;
  const int p = static_cast<int>(orders.size());

  int total = 0;
  for (int o : orders) total += o;
  total -= (p - 1);  // shared interfaces

  grid.nodes_ = VectorXd(total);
  grid.weights_ = VectorXd::Zero(total);
  grid.subs_.resize(p);

  int next = 0;
  for (int s = 0; s < p; ++s) {
    Subinterval& sub = grid.subs_[s];
    sub.left = boundaries[s];
    sub.right = boundaries[s + 1];
    sub.order = orders[s];
    const double half = 0.5 * (sub.right - sub.left);
    const double mid = 0.5 * (sub.right + sub.left);

    const LglRule rule = lgl_rule(sub.order);
    VectorXd local_nodes(sub.order);
    for (int i = 0; i < sub.order; ++i) local_nodes(i) = mid + half * rule.nodes(i);
    // exact endpoints so interface nodes coincide bit-for-bit
    local_nodes(0) = sub.left;
    local_nodes(sub.order - 1) = sub.right;

    sub.node_index.resize(sub.order);
    for (int i = 0; i < sub.order; ++i) {
      if (s > 0 && i == 0) {
        sub.node_index[i] = grid.subs_[s - 1].node_index.back();
      } else {
        sub.node_index[i] = next;
        grid.nodes_(next) = local_nodes(i);
        ++next;
      }
    }

    sub.local_weights = half * rule.weights;
    for (int i = 0; i < sub.order; ++i) grid.weights_(sub.node_index[i]) += sub.local_weights(i);

    sub.diff = differentiation_matrix(local_nodes);
    sub.bary = barycentric_weights(local_nodes);
  }
  return grid;
}

std::vector<int> TimeGrid::orders() const {
  std::vector<int> o(subs_.size());
  for (std::size_t i = 0; i < subs_.size(); ++i) o[i] = subs_[i].order;
  return o;
}

int TimeGrid::locate(double tau) const {
  if (tau < domain_start() || tau > domain_end())
    throw ContractViolation("TimeGrid: time " + std::to_string(tau) + " outside [" +
                            std::to_string(domain_start()) + ", " + std::to_string(domain_end()) +
                            "]");
  for (int s = 0; s < interval_count() - 1; ++s)
    if (tau <= subs_[s].right) return s;
  return interval_count() - 1;
}

double TimeGrid::quadrature(const VectorXd& node_values) const {
  if (node_values.size() != node_count())
    throw ContractViolation("quadrature: expected one value per node");
  return weights_.dot(node_values);
}

VectorXd TimeGrid::interpolate(const VectorXd& coeffs, int ncomp, double tau) const {
  const int nn = node_count();
  if (coeffs.size() != static_cast<Eigen::Index>(ncomp) * nn)
    throw ContractViolation("interpolate: coefficient length mismatch");
  const Subinterval& sub = subs_[locate(tau)];

  // exact hit on a node returns the stored coefficient
  for (int i = 0; i < sub.order; ++i) {
    const double ti = nodes_(sub.node_index[i]);
    if (tau == ti) {
      VectorXd v(ncomp);
      for (int k = 0; k < ncomp; ++k) v(k) = coeffs(k * nn + sub.node_index[i]);
      return v;
    }
  }

  double denom = 0.0;
  VectorXd numer = VectorXd::Zero(ncomp);
  for (int i = 0; i < sub.order; ++i) {
    const double w = sub.bary(i) / (tau - nodes_(sub.node_index[i]));
    denom += w;
    for (int k = 0; k < ncomp; ++k) numer(k) += w * coeffs(k * nn + sub.node_index[i]);
  }
  return numer / denom;
}

VectorXd TimeGrid::interpolate_derivative(const VectorXd& coeffs, int ncomp, double tau) const {
  const int nn = node_count();
  if (coeffs.size() != static_cast<Eigen::Index>(ncomp) * nn)
    throw ContractViolation("interpolate_derivative: coefficient length mismatch");
  const Subinterval& sub = subs_[locate(tau)];

  // nodal derivative values within the subinterval, then interpolate those
  MatrixXd dvals(sub.order, ncomp);
  for (int k = 0; k < ncomp; ++k) {
    VectorXd local(sub.order);
    for (int i = 0; i < sub.order; ++i) local(i) = coeffs(k * nn + sub.node_index[i]);
    dvals.col(k) = sub.diff * local;
  }

  for (int i = 0; i < sub.order; ++i)
    if (tau == nodes_(sub.node_index[i])) return dvals.row(i).transpose();

  double denom = 0.0;
  VectorXd numer = VectorXd::Zero(ncomp);
  for (int i = 0; i < sub.order; ++i) {
    const double w = sub.bary(i) / (tau - nodes_(sub.node_index[i]));
    denom += w;
    numer += w * dvals.row(i).transpose();
  }
  return numer / denom;
}

MatrixXd TimeGrid::differentiation_apply(const VectorXd& coeffs, int ncomp) const {
  const int nn = node_count();
  if (coeffs.size() != static_cast<Eigen::Index>(ncomp) * nn)
    throw ContractViolation("differentiation_apply: coefficient length mismatch");
  int rows = 0;
  for (const auto& sub : subs_) rows += sub.order;
  MatrixXd out(rows, ncomp);
  int r = 0;
  for (const auto& sub : subs_) {
    for (int k = 0; k < ncomp; ++k) {
      VectorXd local(sub.order);
      for (int i = 0; i < sub.order; ++i) local(i) = coeffs(k * nn + sub.node_index[i]);
      out.block(r, k, sub.order, 1) = sub.diff * local;
    }
    r += sub.order;
  }
  return out;
}

VectorXd assemble_residual(const TimeGrid& grid, const VectorXd& y, const VectorXd& z, double T,
                           const DynamicsModel& model, const VectorXd& theta, const VectorXd& x0,
                           ResidualJacobians* jac) {
  const int n = model.state_dim;
  const int m = model.control_dim;
  const int nn = grid.node_count();
  const int q = theta.size() == 0 ? 0 : model.theta_dim();
  if (y.size() != static_cast<Eigen::Index>(n) * nn)
    throw ContractViolation("assemble_residual: y length mismatch");
  if (z.size() != static_cast<Eigen::Index>(m) * nn)
    throw ContractViolation("assemble_residual: z length mismatch");
  if (x0.size() != n) throw ContractViolation("assemble_residual: x0 length mismatch");

  const double scale = T / grid.domain_length();
  const int rows = n * nn;
  VectorXd r = VectorXd::Zero(rows);
  if (jac) {
    jac->wrt_y = MatrixXd::Zero(rows, n * nn);
    jac->wrt_z = MatrixXd::Zero(rows, m * nn);
    jac->wrt_theta = MatrixXd::Zero(rows, q);
    jac->wrt_T = VectorXd::Zero(rows);
  }

  // f and its linearization at every node
  MatrixXd fvals(n, nn);
  std::vector<Linearization> lins;
  if (jac) lins.resize(nn);
  for (int i = 0; i < nn; ++i) {
    VectorXd xi(n), ui(m);
    for (int k = 0; k < n; ++k) xi(k) = y(k * nn + i);
    for (int k = 0; k < m; ++k) ui(k) = z(k * nn + i);
    const double t_phys = grid.nodes()(i) * scale;
    try {
      fvals.col(i) = eval_rhs(model, t_phys, xi, ui, theta);
      if (jac) lins[i] = linearize(model, t_phys, xi, ui, theta);
    } catch (const EvaluationError& e) {
      throw EvaluationError(std::string(e.what()) + " (node " + std::to_string(i) + ")");
    }
  }

  int row = 0;
  // r_coll: interior nodes of each subinterval
  for (int s = 0; s < grid.interval_count(); ++s) {
    const Subinterval& sub = grid.interval(s);
    for (int j = 1; j < sub.order - 1; ++j) {
      const int gj = sub.node_index[j];
      for (int k = 0; k < n; ++k) {
        double deriv = 0.0;
        for (int l = 0; l < sub.order; ++l) deriv += sub.diff(j, l) * y(k * nn + sub.node_index[l]);
        r(row) = deriv - scale * fvals(k, gj);
        if (jac) {
          for (int l = 0; l < sub.order; ++l)
            jac->wrt_y(row, k * nn + sub.node_index[l]) += sub.diff(j, l);
          for (int k2 = 0; k2 < n; ++k2)
            jac->wrt_y(row, k2 * nn + gj) -= scale * lins[gj].wrt_state(k, k2);
          for (int k2 = 0; k2 < m; ++k2)
            jac->wrt_z(row, k2 * nn + gj) -= scale * lins[gj].wrt_control(k, k2);
          for (int c = 0; c < q; ++c) jac->wrt_theta(row, c) -= scale * lins[gj].wrt_theta(k, c);
          jac->wrt_T(row) = -fvals(k, gj) / grid.domain_length();
        }
        ++row;
      }
    }
  }

  // r_init: interpolated x(t0) - x0; t0 is a node, so this is the first
  // coefficient of each component.
  for (int k = 0; k < n; ++k) {
    r(row) = y(k * nn + 0) - x0(k);
    if (jac) jac->wrt_y(row, k * nn + 0) = 1.0;
    ++row;
  }

  // r_inter: x(t_i) - x(t_{i-1}) - (T/L) * integral of f over the subinterval
  for (int s = 0; s < grid.interval_count(); ++s) {
    const Subinterval& sub = grid.interval(s);
    const int first = sub.node_index.front();
    const int last = sub.node_index.back();
    for (int k = 0; k < n; ++k) {
      double integral = 0.0;
      for (int j = 0; j < sub.order; ++j)
        integral += sub.local_weights(j) * fvals(k, sub.node_index[j]);
      r(row) = y(k * nn + last) - y(k * nn + first) - scale * integral;
      if (jac) {
        jac->wrt_y(row, k * nn + last) += 1.0;
        jac->wrt_y(row, k * nn + first) -= 1.0;
        for (int j = 0; j < sub.order; ++j) {
          const int gj = sub.node_index[j];
          const double wj = scale * sub.local_weights(j);
          for (int k2 = 0; k2 < n; ++k2)
            jac->wrt_y(row, k2 * nn + gj) -= wj * lins[gj].wrt_state(k, k2);
          for (int k2 = 0; k2 < m; ++k2)
            jac->wrt_z(row, k2 * nn + gj) -= wj * lins[gj].wrt_control(k, k2);
          for (int c = 0; c < q; ++c)
            jac->wrt_theta(row, c) -= wj * lins[gj].wrt_theta(k, c);
        }
        jac->wrt_T(row) = -integral / grid.domain_length();
      }
      ++row;
    }
  }
  return r;
}

}  // namespace sdoed
