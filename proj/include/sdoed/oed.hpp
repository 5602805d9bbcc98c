#ifndef SDOED_OED_HPP
#define SDOED_OED_HPP

#include <Eigen/Core>
#include <string>
#include <vector>

namespace sdoed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Budget-constrained selection of experiments to reduce controller
// sensitivity: minimize sum_i c_i^2 (1 - w'r_i)_+^2 over binary w with
// kappa'w <= budget.
struct DesignProblem {
  VectorXd c;       // c_i = d_i a_i, length q
  MatrixXd r;       // reduction coefficients, q x d, entries in [0, 1]
  VectorXd kappa;   // experiment costs, length d, positive
  double budget = 0.0;
};

// How the correlation lengths index the reduction kernel: one per experiment
// (column) or one per theta coordinate (row).
enum class GammaIndexing { PerExperiment, PerCoordinate };

// r_ij = exp(-gamma^2 dist2_ij) - eps_j, clamped to [0, 1]. dist2 holds the
// squared anchor distances, gamma is per column or per row.
MatrixXd reduction_matrix(const MatrixXd& dist2, const VectorXd& gamma, GammaIndexing indexing,
                          const VectorXd& eps);

// b_i(w) = (1 - sum_j w_j r_ij)_+
VectorXd info_diagonal(const MatrixXd& r, const std::vector<int>& w);

double design_objective(const DesignProblem& dp, const std::vector<int>& w);

// Optimal slack values of the slack-variable reformulation; the minimized
// slack objective equals design_objective for every w, which the solver
// asserts on its result.
VectorXd optimal_slacks(const DesignProblem& dp, const std::vector<int>& w);
double slack_objective(const DesignProblem& dp, const VectorXd& slacks);

struct DesignVector {
  std::vector<int> w;  // 0/1 selections
  double objective = 0.0;
  VectorXd b;
  bool certified = false;  // true when produced by an exact method
  std::string method;      // "enumeration", "branch_and_bound", or "greedy"
};

struct DesignSolveOptions {
  // exhaustive enumeration when the feasible-support count is at most this
  double enumeration_limit = 1e5;
  // certified branch-and-bound up to this count; beyond it the greedy
  // fallback runs if enabled, otherwise solve_design reports capacity
  double bnb_limit = 1e6;
  bool allow_greedy = false;
  enum class Method { Auto, Enumerate, BranchAndBound, Greedy } method = Method::Auto;
};

DesignVector solve_design(const DesignProblem& dp, const DesignSolveOptions& opts = {});

// Number of budget-feasible supports (sum over k <= kmax of C(d, k), capped).
double feasible_support_count(const DesignProblem& dp);

}  // namespace sdoed

#endif
