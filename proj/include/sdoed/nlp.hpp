#ifndef SDOED_NLP_HPP
#define SDOED_NLP_HPP

#include <functional>
#include <string>
#include <vector>

#include "sdoed/collocation.hpp"
#include "sdoed/dynamics.hpp"
#include "sdoed/errors.hpp"

namespace sdoed {

struct CostModel {
  // integral term; null means zero
  std::function<double(double, const VectorXd&, const VectorXd&)> running;
  std::function<void(double, const VectorXd&, const VectorXd&, VectorXd&, VectorXd&)> running_grad;
  // final term; null means zero
  std::function<double(const VectorXd&, const VectorXd&, double)> final_cost;
  std::function<void(const VectorXd&, const VectorXd&, double, VectorXd&, VectorXd&, double&)>
      final_grad;
};

struct TerminalConstraint {
  std::string name;
  std::function<double(const VectorXd&, const VectorXd&, double)> value;
  std::function<void(const VectorXd&, const VectorXd&, double, VectorXd&, VectorXd&, double&)>
      gradient;
};

// Discretized optimal control problem on a fixed grid. For free final time
// the grid lives on [0, 1] and T scales the dynamics; otherwise the grid is
// the physical time window and T is pinned to its length.
struct OcpProblem {
  const DynamicsModel* model = nullptr;
  TimeGrid grid;
  VectorXd x0;
  CostModel cost;
  std::vector<TerminalConstraint> terminal;
  bool free_time = false;
  double T_nominal = 1.0;
  double T_min = 0.1;
  double T_max = 10.0;

  // Quadratic penalty on the control's grid-coordinate derivative added to
  // the discretized objective. Interface and terminal control values enter
  // the collocation system only through subinterval integrals, which leaves
  // node-to-node control oscillation nearly free; a small positive value
  // pins it without moving smooth solutions measurably.
  double control_smoothing = 0.0;

  // Tie the control values at non-collocated nodes (subinterval endpoints)
  // to the interpolant through the interior nodes. The dynamics are not
  // collocated there, so free endpoint controls carry spurious degrees of
  // freedom that show up as ringing. Disabled automatically for subintervals
  // with fewer than two interior nodes.
  bool tie_endpoint_controls = true;

  int state_coeff_count() const { return model->state_dim * grid.node_count(); }
  int control_coeff_count() const { return model->control_dim * grid.node_count(); }
};

struct DiscreteSolution {
  VectorXd y;  // state coefficients, component-major
  VectorXd z;  // control coefficients, component-major
  double T = 1.0;
  VectorXd multipliers;  // equality multipliers (collocation system, then terminal)
  double kkt_residual = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double feasibility = 0.0;
  double step_length = 0.0;
  double merit = 0.0;
  double merit_decrease = 0.0;  // theta_mu(x_k) - theta_mu(x_{k+1}), >= 0 on merit steps
  double stationarity = 0.0;
  // true when the step passed the Armijo test; full steps taken in the local
  // terminal regime bypass it (merit changes there are below roundoff scale)
  bool merit_step = false;
};

struct SolveOptions {
  double tol = 1e-6;
  int max_iterations = 200;
  double penalty_initial = 10.0;
  double penalty_max = 1e10;
  bool collect_history = true;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  std::vector<IterationRecord> history;
};

class NlpFailure : public SolveError {
public:
  NlpFailure(const std::string& what, DiscreteSolution best_iterate,
             std::vector<IterationRecord> hist)
      : SolveError(what), best(std::move(best_iterate)), history(std::move(hist)) {}
  DiscreteSolution best;
  std::vector<IterationRecord> history;
};

// SQP with an l1 exact-penalty line search; equality constraints are the
// collocation system plus terminal conditions, inequalities (boxes and path
// constraints at the nodes) go through an active-set QP. Throws NlpFailure
// when the iteration limit or line search gives out.
DiscreteSolution solve_ocp(const OcpProblem& problem, const DiscreteSolution& guess,
                           const SolveOptions& opts = {}, SolveReport* report = nullptr);

// Linear state interpolation x0 -> x_target (or constant x0), mid-box
// controls, T = T_nominal.
DiscreteSolution initial_guess(const OcpProblem& problem, const VectorXd* x_target = nullptr);

struct KktReport {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double complementarity = 0.0;
};

KktReport kkt_report(const OcpProblem& problem, const DiscreteSolution& solution);

double objective_value(const OcpProblem& problem, const DiscreteSolution& solution);

// Linear equality rows (over the control coefficients) implementing
// tie_endpoint_controls; exposed so oracle tests can reproduce the exact
// constraint set of the transcription. Each row r satisfies r' z = 0.
MatrixXd control_tie_rows(const OcpProblem& problem);

// Largest dynamics defect of the interpolated solution measured off the
// collocation nodes, per subinterval.
VectorXd offnode_residuals(const OcpProblem& problem, const DiscreteSolution& solution,
                           int samples_per_interval = 8);

// Re-solve with up to `rounds` bisections of the subinterval with the largest
// off-node defect. Returns the final problem (refined grid) through
// `refined`, which must outlive the returned solution's use.
DiscreteSolution solve_ocp_adaptive(const OcpProblem& problem, const DiscreteSolution& guess,
                                    const SolveOptions& opts, int rounds, OcpProblem* refined,
                                    SolveReport* report = nullptr);

// Interpolate a solution from one grid onto another (same model/layout).
DiscreteSolution transfer_solution(const OcpProblem& from, const DiscreteSolution& sol,
                                   const OcpProblem& to);

}  // namespace sdoed

#endif
