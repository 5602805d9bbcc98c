#ifndef SDOED_PIPELINE_HPP
#define SDOED_PIPELINE_HPP

#include <memory>
#include <string>
#include <vector>

#include "sdoed/config.hpp"
#include "sdoed/lqr.hpp"
#include "sdoed/nlp.hpp"
#include "sdoed/oed.hpp"
#include "sdoed/tracking.hpp"

namespace sdoed {

struct SimulationSummary {
  double tracking_error = 0.0;
  double control_effort = 0.0;
  double demand_effort = 0.0;
  std::vector<bool> channel_violated;
};

struct WorkflowReport {
  double baseline_objective = 0.0;
  double baseline_T = 0.0;
  double baseline_kkt = 0.0;
  VectorXd sensitivity_indices;
  std::vector<int> design_w;
  double design_objective_value = 0.0;
  VectorXd design_b;
  bool design_certified = false;
  std::string design_method;
  double updated_objective = 0.0;
  double updated_T = 0.0;
  double updated_kkt = 0.0;
  SimulationSummary open_pre, closed_pre, open_post, closed_post;
  double effort_reduction_ratio = 1.0;
};

struct CompareRow {
  std::string id;
  double mean_effort = 0.0;
  double mean_error = 0.0;
  int cells_ok = 0;
  int cells_failed = 0;
};

// Staged execution of the planning / sensitivity / design / update /
// simulation workflow with file artifacts in the output directory; each
// stage reloads its inputs from disk when not already in memory, so stages
// can run in separate processes.
class Pipeline {
public:
  Pipeline(WorkflowConfig cfg, std::string out_dir);
  ~Pipeline();

  void set_seed(std::uint64_t seed);

  void run_plan();
  void run_hdsa();
  void run_design();
  void run_update();
  void run_simulate();
  WorkflowReport run_workflow();
  std::vector<CompareRow> run_compare(int n_designs = 0, int n_truth = 0);

  Json summary() const;

  // in-memory accessors for tests
  const WorkflowConfig& config() const { return cfg_; }
  const OcpProblem& baseline_ocp() const;
  const DiscreteSolution& baseline_reference() const;
  const SensitivityMatrix& sensitivities() const;
  const DesignVector& design() const;
  const OcpProblem& updated_ocp() const;
  const DiscreteSolution& updated_reference() const;
  const WorkflowReport& report() const;
  const DynamicsModel& truth_model() const;

private:
  struct State;
  std::unique_ptr<State> state_;
  WorkflowConfig cfg_;
  std::string out_dir_;
};

}  // namespace sdoed

#endif
