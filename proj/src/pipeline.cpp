#include "sdoed/pipeline.hpp"

#include <atomic>
#include <functional>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sdoed/rng.hpp"

namespace sdoed {

namespace {

constexpr std::uint64_t kDesignStream = 101;
constexpr std::uint64_t kTruthStream = 202;

// global experiment axes per component (model input order)
std::vector<int> component_axes(ModelKind kind, int component) {
  if (kind == ModelKind::Zermelo) return {0};
  if (component == 2) return {0, 1, 2};  // CY over (M, alpha, beta)
  return {0, 1};                         // CN, CA over (M, alpha)
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("pipeline: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("pipeline: missing artifact '" + path + "' (run the earlier stage)");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("pipeline: cannot parse '" + path + "': " + e.what());
  }
  return j;
}

std::string csv_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

struct Pipeline::State {
  std::unique_ptr<DynamicsModel> planning;
  std::unique_ptr<DynamicsModel> truth;
  std::unique_ptr<DynamicsModel> updated;

  OcpProblem ocp;          // baseline problem on the (possibly refined) grid
  OcpProblem updated_ocp;  // same grid, updated model

  bool have_reference = false;
  DiscreteSolution reference;
  double baseline_objective = 0.0;

  bool have_sensitivity = false;
  SensitivityMatrix sensitivity;

  bool have_design = false;
  DesignProblem design_problem;
  DesignVector design;

  bool have_update = false;
  DiscreteSolution updated_reference;
  double updated_objective = 0.0;
  DesignEvaluation design_eval;

  bool have_report = false;
  WorkflowReport report;

  std::uint64_t seed = 0;
  bool seed_set = false;
};

namespace {

DynamicsModel build_planning_model(const WorkflowConfig& cfg) {
  if (cfg.kind == ModelKind::Zermelo) {
    DynamicsModel m = make_zermelo_model(cfg.zermelo);
    const auto& b = *cfg.basis_1d;
    attach_uniform_basis_1d(m, 0, b.lo, b.hi, b.count, b.width);
    return m;
  }
  DynamicsModel m = make_glide_model(cfg.glide);
  // basis blocks must be attached in component order to keep theta layout
  std::vector<BasisGridConfig> grids = cfg.basis_grids;
  std::stable_sort(grids.begin(), grids.end(),
                   [](const BasisGridConfig& a, const BasisGridConfig& b) {
                     return a.component < b.component;
                   });
  for (const auto& g : grids) {
    std::vector<VectorXd> axes;
    for (const auto& axis : g.axis_grids) {
      VectorXd v(axis.size());
      for (std::size_t i = 0; i < axis.size(); ++i) v(i) = axis[i];
      axes.push_back(v);
    }
    attach_grid_basis(m, g.component, axes, g.width);
  }
  return m;
}

DynamicsModel build_truth_model(const WorkflowConfig& cfg) {
  return cfg.kind == ModelKind::Zermelo ? make_zermelo_model(cfg.zermelo_truth)
                                        : make_glide_model(cfg.glide_truth);
}

OcpProblem build_ocp(const WorkflowConfig& cfg, const DynamicsModel* model,
                     const TimeGrid& grid) {
  OcpProblem p;
  p.model = model;
  p.grid = grid;
  p.x0 = cfg.x0;
  p.control_smoothing = cfg.discretization.control_smoothing;
  if (cfg.kind == ModelKind::Zermelo) {
    p.cost.final_cost = [](const VectorXd& xT, const VectorXd&, double) { return -xT(0); };
    p.cost.final_grad = [](const VectorXd&, const VectorXd&, double, VectorXd& dx, VectorXd& du,
                           double& dT) {
      dx = VectorXd::Zero(2);
      du = VectorXd::Zero(1);
      dx(0) = -1.0;
      dT = 0.0;
    };
    TerminalConstraint tc;
    tc.name = "x2_final";
    tc.value = [](const VectorXd& xT, const VectorXd&, double) { return xT(1); };
    tc.gradient = [](const VectorXd&, const VectorXd&, double, VectorXd& dx, VectorXd& du,
                     double& dT) {
      dx = VectorXd::Zero(2);
      du = VectorXd::Zero(1);
      dx(1) = 1.0;
      dT = 0.0;
    };
    p.terminal.push_back(tc);
  } else {
    const VectorXd target = cfg.glide_target;
    p.cost.final_cost = [target](const VectorXd& xT, const VectorXd&, double) {
      return (xT.head(3) - target).squaredNorm();
    };
    p.cost.final_grad = [target](const VectorXd& xT, const VectorXd&, double, VectorXd& dx,
                                 VectorXd& du, double& dT) {
      dx = VectorXd::Zero(6);
      du = VectorXd::Zero(3);
      dx.head(3) = 2.0 * (xT.head(3) - target);
      dT = 0.0;
    };
    p.free_time = true;
    p.T_nominal = cfg.T_nominal;
    p.T_min = cfg.T_min;
    p.T_max = cfg.T_max;
  }
  return p;
}

SolveOptions solver_options(const WorkflowConfig& cfg) {
  SolveOptions opts;
  opts.tol = cfg.nlp.tol;
  opts.max_iterations = cfg.nlp.max_iterations;
  return opts;
}

LqrWeights lqr_weights(const WorkflowConfig& cfg, int n, int m) {
  LqrWeights w;
  w.Q = cfg.lqr.state_weight * MatrixXd::Identity(n, n);
  w.R = cfg.lqr.control_weight * MatrixXd::Identity(m, m);
  w.Qf = cfg.lqr.terminal_weight * MatrixXd::Identity(n, n);
  return w;
}

// truth evaluations at the selected candidate points
DesignEvaluation evaluate_truth(const WorkflowConfig& cfg, const DynamicsModel& truth,
                                const std::vector<VectorXd>& points) {
  DesignEvaluation ev;
  ev.points = points;
  const int ell = truth.output_dim();
  ev.values.resize(points.size(), ell);
  for (std::size_t pidx = 0; pidx < points.size(); ++pidx) {
    for (int k = 0; k < ell; ++k) {
      const auto axes = component_axes(cfg.kind, k);
      VectorXd s(axes.size());
      for (std::size_t a = 0; a < axes.size(); ++a) s(a) = points[pidx](axes[a]);
      ev.values(pidx, k) = truth.surrogate.components[k].value(s);
    }
  }
  return ev;
}

std::vector<ComponentSampling> sampling_map(const WorkflowConfig& cfg, int ell) {
  std::vector<ComponentSampling> out;
  for (int k = 0; k < ell; ++k) out.push_back({k, component_axes(cfg.kind, k)});
  return out;
}

DiscreteSolution make_guess(const WorkflowConfig& cfg, const OcpProblem& p) {
  if (cfg.guess_target.size() == p.model->state_dim) {
    const VectorXd target = cfg.guess_target;
    return initial_guess(p, &target);
  }
  if (cfg.kind == ModelKind::Glide) {
    VectorXd target(6);
    target.head(3) = cfg.glide_target;
    target.tail(3) = cfg.x0.tail(3);
    return initial_guess(p, &target);
  }
  return initial_guess(p);
}

}  // namespace

Pipeline::Pipeline(WorkflowConfig cfg, std::string out_dir)
    : state_(std::make_unique<State>()), cfg_(std::move(cfg)), out_dir_(std::move(out_dir)) {
  std::filesystem::create_directories(out_dir_);
  state_->planning = std::make_unique<DynamicsModel>(build_planning_model(cfg_));
  state_->truth = std::make_unique<DynamicsModel>(build_truth_model(cfg_));
  const TimeGrid grid =
      TimeGrid::build(cfg_.discretization.boundaries, cfg_.discretization.orders);
  state_->ocp = build_ocp(cfg_, state_->planning.get(), grid);
  state_->seed = cfg_.seed;
  state_->seed_set = cfg_.seed_set;
}

Pipeline::~Pipeline() = default;

void Pipeline::set_seed(std::uint64_t seed) {
  state_->seed = seed;
  state_->seed_set = true;
}

const OcpProblem& Pipeline::baseline_ocp() const { return state_->ocp; }
const DiscreteSolution& Pipeline::baseline_reference() const { return state_->reference; }
const SensitivityMatrix& Pipeline::sensitivities() const { return state_->sensitivity; }
const DesignVector& Pipeline::design() const { return state_->design; }
const OcpProblem& Pipeline::updated_ocp() const { return state_->updated_ocp; }
const DiscreteSolution& Pipeline::updated_reference() const { return state_->updated_reference; }
const WorkflowReport& Pipeline::report() const { return state_->report; }
const DynamicsModel& Pipeline::truth_model() const { return *state_->truth; }

// ---------- plan ----------

void Pipeline::run_plan() {
  State& st = *state_;
  SolveOptions opts = solver_options(cfg_);
  SolveReport rep;
  OcpProblem refined;
  st.reference = solve_ocp_adaptive(st.ocp, make_guess(cfg_, st.ocp), opts,
                                    cfg_.discretization.adaptation_rounds, &refined, &rep);
  st.ocp = refined;
  st.baseline_objective = rep.objective;
  st.have_reference = true;

  Json j;
  j["schema_version"] = 1;
  j["stage"] = "plan";
  j["grid"]["boundaries"] = st.ocp.grid.boundaries();
  j["grid"]["orders"] = st.ocp.grid.orders();
  j["reference"]["y"] = vector_to_json(st.reference.y);
  j["reference"]["z"] = vector_to_json(st.reference.z);
  j["reference"]["T"] = st.reference.T;
  j["reference"]["multipliers"] = vector_to_json(st.reference.multipliers);
  j["reference"]["kkt_residual"] = st.reference.kkt_residual;
  j["objective"] = rep.objective;
  j["solver"]["iterations"] = rep.iterations;
  j["solver"]["stationarity"] = rep.stationarity;
  j["solver"]["feasibility"] = rep.feasibility;
  write_json(out_dir_ + "/plan.json", j);

  if (cfg_.nlp.log_iterations) {
    std::ofstream log(out_dir_ + "/nlp_iterations.csv");
    log << "iteration,objective,feasibility,step_length\n";
    for (const auto& r : rep.history)
      log << r.iteration << "," << csv_num(r.objective) << "," << csv_num(r.feasibility) << ","
          << csv_num(r.step_length) << "\n";
  }
}

namespace {

void load_reference(const std::string& path, const WorkflowConfig& cfg, OcpProblem& ocp,
                    const DynamicsModel* model, DiscreteSolution& ref, double& objective) {
  const Json j = read_json(path);
  std::vector<double> boundaries;
  std::vector<int> orders;
  for (const auto& b : j.at("grid").at("boundaries")) boundaries.push_back(b.get<double>());
  for (const auto& o : j.at("grid").at("orders")) orders.push_back(o.get<int>());
  ocp = build_ocp(cfg, model, TimeGrid::build(boundaries, orders));
  ref.y = vector_from_json(j.at("reference").at("y"));
  ref.z = vector_from_json(j.at("reference").at("z"));
  ref.T = j.at("reference").at("T").get<double>();
  ref.multipliers = vector_from_json(j.at("reference").at("multipliers"));
  ref.kkt_residual = j.at("reference").at("kkt_residual").get<double>();
  objective = j.at("objective").get<double>();
}

}  // namespace

// ---------- hdsa ----------

void Pipeline::run_hdsa() {
  State& st = *state_;
  if (!st.have_reference) {
    load_reference(out_dir_ + "/plan.json", cfg_, st.ocp, st.planning.get(), st.reference,
                   st.baseline_objective);
    st.have_reference = true;
  }
  const TrackingProblem tp = make_tracking_problem(st.ocp, st.reference, cfg_.tracking_alpha);
  st.sensitivity = sensitivity_matrix(tp);
  st.have_sensitivity = true;

  Json j;
  j["schema_version"] = 1;
  j["stage"] = "hdsa";
  j["alpha"] = cfg_.tracking_alpha;
  j["D"] = matrix_to_json(st.sensitivity.D);
  j["mu_diag"] = vector_to_json(st.sensitivity.mu_diag);
  j["indices"] = vector_to_json(st.sensitivity.indices);
  Json anchors = Json::array();
  for (const auto& f : st.planning->basis.functions) {
    Json a;
    a["component"] = f.component;
    a["center"] = vector_to_json(f.center);
    a["width"] = f.width;
    anchors.push_back(a);
  }
  j["anchors"] = anchors;
  write_json(out_dir_ + "/hdsa.json", j);

  std::ofstream csv(out_dir_ + "/sensitivity.csv");
  csv << "index,component,c0,c1,c2,d\n";
  for (int i = 0; i < st.sensitivity.indices.size(); ++i) {
    const auto& f = st.planning->basis.functions[i];
    csv << i << "," << f.component;
    for (int a = 0; a < 3; ++a)
      csv << "," << (a < f.center.size() ? csv_num(f.center(a)) : "");
    csv << "," << csv_num(st.sensitivity.indices(i)) << "\n";
  }
}

// ---------- design ----------

namespace {

// gamma_i = gamma0 * integral of phi_i |dgbar/ds| over the basis range
// (single-input components only; LGL quadrature)
VectorXd coordinate_scaled_gammas(const WorkflowConfig& cfg, const DynamicsModel& model) {
  const int q = model.theta_dim();
  VectorXd gam(q);
  const LglRule rule = lgl_rule(48);
  for (int i = 0; i < q; ++i) {
    const auto& f = model.basis.functions[i];
    const auto& comp = model.surrogate.components[f.component];
    if (comp.input_dim() != 1)
      throw ConfigError(
          "oed.gamma_mode=coordinate_scaled requires single-input model components");
    const double lo = cfg.basis_1d ? cfg.basis_1d->lo : f.center(0) - 1.0;
    const double hi = cfg.basis_1d ? cfg.basis_1d->hi : f.center(0) + 1.0;
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    double integral = 0.0;
    for (int n = 0; n < rule.nodes.size(); ++n) {
      const VectorXd s = VectorXd::Constant(1, mid + half * rule.nodes(n));
      integral += half * rule.weights(n) * f.value(s) * std::abs(comp.gradient(s)(0));
    }
    gam(i) = cfg.oed.gamma0 * integral;
    if (!(gam(i) > 0.0))
      throw ConfigError("coordinate_scaled gamma became nonpositive; check the nominal model");
  }
  return gam;
}

MatrixXd anchor_candidate_dist2(const WorkflowConfig& cfg, const DynamicsModel& model) {
  const int q = model.theta_dim();
  const int d = static_cast<int>(cfg.oed.candidates.size());
  MatrixXd dist2(q, d);
  for (int i = 0; i < q; ++i) {
    const auto& f = model.basis.functions[i];
    const auto axes = component_axes(cfg.kind, f.component);
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const double diff = f.center(a) - cfg.oed.candidates[j](axes[a]);
        acc += diff * diff;
      }
      dist2(i, j) = acc;
    }
  }
  return dist2;
}

DesignProblem build_design_problem(const WorkflowConfig& cfg, const DynamicsModel& model,
                                   const VectorXd& indices) {
  const int q = model.theta_dim();
  const int d = static_cast<int>(cfg.oed.candidates.size());
  DesignProblem dp;
  VectorXd a = VectorXd::Ones(q);
  if (!cfg.oed.error_weights.empty()) {
    if (static_cast<int>(cfg.oed.error_weights.size()) != q)
      throw ConfigError("oed.error_weights must have one entry per theta coordinate");
    for (int i = 0; i < q; ++i) a(i) = cfg.oed.error_weights[i];
  }
  dp.c = indices.cwiseProduct(a);
  const MatrixXd dist2 = anchor_candidate_dist2(cfg, model);
  if (cfg.oed.gamma_mode == OedConfig::GammaMode::CoordinateScaled) {
    dp.r = reduction_matrix(dist2, coordinate_scaled_gammas(cfg, model),
                            GammaIndexing::PerCoordinate, VectorXd::Constant(d, cfg.oed.epsilon));
  } else {
    dp.r = reduction_matrix(dist2, VectorXd::Constant(d, cfg.oed.gamma_fixed),
                            GammaIndexing::PerExperiment, VectorXd::Constant(d, cfg.oed.epsilon));
  }
  dp.kappa = VectorXd::Constant(d, cfg.oed.cost);
  dp.budget = cfg.oed.budget;
  return dp;
}

}  // namespace

void Pipeline::run_design() {
  State& st = *state_;
  if (!st.have_sensitivity) {
    const Json j = read_json(out_dir_ + "/hdsa.json");
    st.sensitivity.D = matrix_from_json(j.at("D"));
    st.sensitivity.mu_diag = vector_from_json(j.at("mu_diag"));
    st.sensitivity.indices = vector_from_json(j.at("indices"));
    st.have_sensitivity = true;
  }
  st.design_problem = build_design_problem(cfg_, *st.planning, st.sensitivity.indices);
  DesignSolveOptions opts;
  opts.allow_greedy = false;
  st.design = solve_design(st.design_problem, opts);
  st.have_design = true;

  Json j;
  j["schema_version"] = 1;
  j["stage"] = "design";
  j["problem"]["c"] = vector_to_json(st.design_problem.c);
  j["problem"]["r"] = matrix_to_json(st.design_problem.r);
  j["problem"]["kappa"] = vector_to_json(st.design_problem.kappa);
  j["problem"]["budget"] = st.design_problem.budget;
  Json cands = Json::array();
  for (const auto& c : cfg_.oed.candidates) cands.push_back(vector_to_json(c));
  j["candidates"] = cands;
  j["solution"]["w"] = st.design.w;
  j["solution"]["objective"] = st.design.objective;
  j["solution"]["b"] = vector_to_json(st.design.b);
  j["solution"]["certified"] = st.design.certified;
  j["solution"]["method"] = st.design.method;
  write_json(out_dir_ + "/design.json", j);

  std::ofstream csv(out_dir_ + "/design.csv");
  csv << "row_kind,index,c0,c1,c2,selected,b\n";
  for (std::size_t jx = 0; jx < cfg_.oed.candidates.size(); ++jx) {
    const VectorXd& c = cfg_.oed.candidates[jx];
    csv << "candidate," << jx;
    for (int a = 0; a < 3; ++a) csv << "," << (a < c.size() ? csv_num(c(a)) : "");
    csv << "," << st.design.w[jx] << ",\n";
  }
  for (int i = 0; i < st.design.b.size(); ++i) {
    const auto& f = st.planning->basis.functions[i];
    csv << "theta," << i;
    for (int a = 0; a < 3; ++a) csv << "," << (a < f.center.size() ? csv_num(f.center(a)) : "");
    csv << ",," << csv_num(st.design.b(i)) << "\n";
  }
}

// ---------- update ----------

void Pipeline::run_update() {
  State& st = *state_;
  if (!st.have_reference) {
    load_reference(out_dir_ + "/plan.json", cfg_, st.ocp, st.planning.get(), st.reference,
                   st.baseline_objective);
    st.have_reference = true;
  }
  if (!st.have_design) {
    const Json j = read_json(out_dir_ + "/design.json");
    st.design_problem.c = vector_from_json(j.at("problem").at("c"));
    st.design_problem.r = matrix_from_json(j.at("problem").at("r"));
    st.design_problem.kappa = vector_from_json(j.at("problem").at("kappa"));
    st.design_problem.budget = j.at("problem").at("budget").get<double>();
    st.design.w = j.at("solution").at("w").get<std::vector<int>>();
    st.design.objective = j.at("solution").at("objective").get<double>();
    st.design.b = vector_from_json(j.at("solution").at("b"));
    st.design.certified = j.at("solution").at("certified").get<bool>();
    st.design.method = j.at("solution").at("method").get<std::string>();
    st.have_design = true;
  }

  std::vector<VectorXd> points;
  for (std::size_t jx = 0; jx < st.design.w.size(); ++jx)
    if (st.design.w[jx]) points.push_back(cfg_.oed.candidates[jx]);

  st.design_eval = evaluate_truth(cfg_, *st.truth, points);
  FitOptions fopts;
  if (cfg_.surrogate.fixed_width)
    fopts.widths = VectorXd::Constant(std::max<std::size_t>(points.size(), 1), cfg_.surrogate.width);
  fopts.width_fallback = cfg_.surrogate.width;
  const ModelSurrogate fitted = fit_update(st.planning->surrogate, st.design_eval,
                                           sampling_map(cfg_, st.planning->output_dim()), fopts);

  st.updated = std::make_unique<DynamicsModel>(*st.planning);
  st.updated->surrogate = fitted;
  st.updated_ocp = build_ocp(cfg_, st.updated.get(), st.ocp.grid);

  SolveOptions opts = solver_options(cfg_);
  SolveReport rep;
  DiscreteSolution guess = st.reference;  // warm start on the shared grid
  st.updated_reference = solve_ocp(st.updated_ocp, guess, opts, &rep);
  st.updated_objective = rep.objective;
  st.have_update = true;

  Json j;
  j["schema_version"] = 1;
  j["stage"] = "update";
  j["surrogate"] = surrogate_to_json(fitted);
  Json pts = Json::array();
  for (const auto& pt : points) pts.push_back(vector_to_json(pt));
  j["points"] = pts;
  j["values"] = matrix_to_json(st.design_eval.values);
  write_json(out_dir_ + "/updated_model.json", j);

  Json jp;
  jp["schema_version"] = 1;
  jp["stage"] = "updated_plan";
  jp["grid"]["boundaries"] = st.updated_ocp.grid.boundaries();
  jp["grid"]["orders"] = st.updated_ocp.grid.orders();
  jp["reference"]["y"] = vector_to_json(st.updated_reference.y);
  jp["reference"]["z"] = vector_to_json(st.updated_reference.z);
  jp["reference"]["T"] = st.updated_reference.T;
  jp["reference"]["multipliers"] = vector_to_json(st.updated_reference.multipliers);
  jp["reference"]["kkt_residual"] = st.updated_reference.kkt_residual;
  jp["objective"] = rep.objective;
  write_json(out_dir_ + "/updated_plan.json", jp);
}

// ---------- simulate ----------

namespace {

SimulationSummary summarize(const SimulationResult& sim) {
  SimulationSummary s;
  s.tracking_error = sim.tracking_error;
  s.control_effort = sim.control_effort;
  s.demand_effort = sim.demand_effort;
  s.channel_violated = sim.channel_violated;
  return s;
}

Json summary_to_json(const SimulationSummary& s) {
  Json j;
  j["tracking_error"] = s.tracking_error;
  j["control_effort"] = s.control_effort;
  j["demand_effort"] = s.demand_effort;
  j["channel_violated"] = s.channel_violated;
  return j;
}

void write_trajectory_csv(const std::string& path, const SimulationResult& sim,
                          const std::vector<std::string>& state_names) {
  std::ofstream csv(path);
  csv << "t";
  for (const auto& n : state_names) csv << "," << n;
  for (const auto& n : state_names) csv << ",ref_" << n;
  csv << "\n";
  for (int i = 0; i < sim.times.size(); ++i) {
    csv << csv_num(sim.times(i));
    for (int k = 0; k < sim.states.cols(); ++k) csv << "," << csv_num(sim.states(i, k));
    for (int k = 0; k < sim.reference_states.cols(); ++k)
      csv << "," << csv_num(sim.reference_states(i, k));
    csv << "\n";
  }
}

void write_controls_csv(const std::string& path, const SimulationResult& sim,
                        const DynamicsModel& model) {
  std::ofstream csv(path);
  csv << "t";
  for (const auto& n : model.control_names) csv << ",open_" << n;
  for (const auto& n : model.control_names) csv << ",closed_" << n;
  for (const auto& n : model.control_names) csv << ",demand_" << n;
  for (const auto& n : model.control_names) csv << ",lower_" << n << ",upper_" << n;
  for (const auto& n : model.control_names) csv << ",clipped_" << n;
  csv << "\n";
  for (int i = 0; i < sim.times.size(); ++i) {
    csv << csv_num(sim.times(i));
    for (int k = 0; k < sim.reference_controls.cols(); ++k)
      csv << "," << csv_num(sim.reference_controls(i, k));
    for (int k = 0; k < sim.controls_applied.cols(); ++k)
      csv << "," << csv_num(sim.controls_applied(i, k));
    for (int k = 0; k < sim.controls_demanded.cols(); ++k)
      csv << "," << csv_num(sim.controls_demanded(i, k));
    for (int k = 0; k < model.control_dim; ++k)
      csv << "," << csv_num(model.control_lower(k)) << "," << csv_num(model.control_upper(k));
    for (int k = 0; k < model.control_dim; ++k) csv << "," << (sim.clipped[i][k] ? 1 : 0);
    csv << "\n";
  }
}

}  // namespace

void Pipeline::run_simulate() {
  State& st = *state_;
  if (!st.have_reference) {
    load_reference(out_dir_ + "/plan.json", cfg_, st.ocp, st.planning.get(), st.reference,
                   st.baseline_objective);
    st.have_reference = true;
  }
  if (!st.have_update) {
    const Json jm = read_json(out_dir_ + "/updated_model.json");
    st.updated = std::make_unique<DynamicsModel>(*st.planning);
    surrogate_corrections_from_json(jm.at("surrogate"), st.updated->surrogate);
    load_reference(out_dir_ + "/updated_plan.json", cfg_, st.updated_ocp, st.updated.get(),
                   st.updated_reference, st.updated_objective);
    st.have_update = true;
  }
  if (!st.have_design) {
    const Json j = read_json(out_dir_ + "/design.json");
    st.design.w = j.at("solution").at("w").get<std::vector<int>>();
    st.design.objective = j.at("solution").at("objective").get<double>();
    st.design.b = vector_from_json(j.at("solution").at("b"));
    st.design.certified = j.at("solution").at("certified").get<bool>();
    st.design.method = j.at("solution").at("method").get<std::string>();
    st.have_design = true;
  }
  if (!st.have_sensitivity) {
    const Json j = read_json(out_dir_ + "/hdsa.json");
    st.sensitivity.D = matrix_from_json(j.at("D"));
    st.sensitivity.mu_diag = vector_from_json(j.at("mu_diag"));
    st.sensitivity.indices = vector_from_json(j.at("indices"));
    st.have_sensitivity = true;
  }

  const int n = st.planning->state_dim, m = st.planning->control_dim;
  const LqrWeights weights = lqr_weights(cfg_, n, m);
  RiccatiOptions ric;
  ric.store_points = cfg_.lqr.store_points;
  SimulationOptions sopts;
  sopts.samples = cfg_.simulate.samples;
  sopts.ode.rel_tol = cfg_.simulate.rel_tol;
  sopts.ode.abs_tol = cfg_.simulate.abs_tol;

  const GainSchedule gains_pre = solve_riccati(st.ocp, st.reference, weights, ric);
  const GainSchedule gains_post =
      solve_riccati(st.updated_ocp, st.updated_reference, weights, ric);

  const SimulationResult open_pre =
      simulate_closed_loop(st.ocp, st.reference, *st.truth, nullptr, sopts);
  const SimulationResult closed_pre =
      simulate_closed_loop(st.ocp, st.reference, *st.truth, &gains_pre, sopts);
  const SimulationResult open_post =
      simulate_closed_loop(st.updated_ocp, st.updated_reference, *st.truth, nullptr, sopts);
  const SimulationResult closed_post =
      simulate_closed_loop(st.updated_ocp, st.updated_reference, *st.truth, &gains_post, sopts);

  WorkflowReport& rep = st.report;
  rep.baseline_objective = st.baseline_objective;
  rep.baseline_T = st.reference.T;
  rep.baseline_kkt = st.reference.kkt_residual;
  rep.sensitivity_indices = st.sensitivity.indices;
  rep.design_w = st.design.w;
  rep.design_objective_value = st.design.objective;
  rep.design_b = st.design.b;
  rep.design_certified = st.design.certified;
  rep.design_method = st.design.method;
  rep.updated_objective = st.updated_objective;
  rep.updated_T = st.updated_reference.T;
  rep.updated_kkt = st.updated_reference.kkt_residual;
  rep.open_pre = summarize(open_pre);
  rep.closed_pre = summarize(closed_pre);
  rep.open_post = summarize(open_post);
  rep.closed_post = summarize(closed_post);
  rep.effort_reduction_ratio =
      rep.closed_pre.control_effort > 1e-14
          ? rep.closed_post.control_effort / rep.closed_pre.control_effort
          : 1.0;
  st.have_report = true;

  Json j;
  j["schema_version"] = 1;
  j["stage"] = "report";
  j["baseline"]["objective"] = rep.baseline_objective;
  j["baseline"]["T"] = rep.baseline_T;
  j["baseline"]["kkt_residual"] = rep.baseline_kkt;
  j["sensitivity"]["indices"] = vector_to_json(rep.sensitivity_indices);
  int argmax = 0;
  rep.sensitivity_indices.maxCoeff(&argmax);
  j["sensitivity"]["argmax"] = argmax;
  j["design"]["w"] = rep.design_w;
  j["design"]["objective"] = rep.design_objective_value;
  j["design"]["b"] = vector_to_json(rep.design_b);
  j["design"]["certified"] = rep.design_certified;
  j["design"]["method"] = rep.design_method;
  j["updated"]["objective"] = rep.updated_objective;
  j["updated"]["T"] = rep.updated_T;
  j["updated"]["kkt_residual"] = rep.updated_kkt;
  j["simulations"]["open_pre"] = summary_to_json(rep.open_pre);
  j["simulations"]["closed_pre"] = summary_to_json(rep.closed_pre);
  j["simulations"]["open_post"] = summary_to_json(rep.open_post);
  j["simulations"]["closed_post"] = summary_to_json(rep.closed_post);
  j["effort_reduction_ratio"] = rep.effort_reduction_ratio;
  write_json(out_dir_ + "/report.json", j);

  write_trajectory_csv(out_dir_ + "/trajectory.csv", closed_post, st.planning->state_names);
  write_trajectory_csv(out_dir_ + "/trajectory_open_pre.csv", open_pre, st.planning->state_names);
  write_trajectory_csv(out_dir_ + "/trajectory_closed_pre.csv", closed_pre,
                       st.planning->state_names);
  write_trajectory_csv(out_dir_ + "/trajectory_open_post.csv", open_post,
                       st.planning->state_names);
  write_controls_csv(out_dir_ + "/controls.csv", closed_post, *st.planning);
  write_controls_csv(out_dir_ + "/controls_pre.csv", closed_pre, *st.planning);
}

WorkflowReport Pipeline::run_workflow() {
  run_plan();
  run_hdsa();
  run_design();
  run_update();
  run_simulate();
  return state_->report;
}

// ---------- compare ----------

namespace {

struct CompareCell {
  double effort = 0.0;
  double error = 0.0;
  bool ok = false;
};

std::vector<DictTerm> random_poly_terms(int naxes, int degree, double amplitude,
                                        CounterRng rng) {
  // all monomials with total degree <= degree over the component's inputs
  std::vector<DictTerm> terms;
  std::vector<int> expo(naxes, 0);
  std::function<void(int, int)> emit = [&](int axis, int remaining) {
    if (axis == naxes) {
      DictTerm t;
      t.coeff = rng.next_uniform(-amplitude, amplitude);
      for (int a = 0; a < naxes; ++a) {
        if (expo[a] > 0)
          t.factors.push_back(TermFactor{a, TermFactor::Fn::Power, expo[a]});
      }
      terms.push_back(t);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      expo[axis] = e;
      emit(axis + 1, remaining - e);
    }
    expo[axis] = 0;
  };
  emit(0, degree);
  return terms;
}

}  // namespace

std::vector<CompareRow> Pipeline::run_compare(int n_designs, int n_truth) {
  State& st = *state_;
  if (!st.seed_set)
    throw ConfigError("compare: a seed is required for randomized studies "
                      "(set 'seed' in the config or pass --seed)");
  if (n_designs <= 0) n_designs = cfg_.compare.designs;
  if (n_truth <= 0) n_truth = cfg_.compare.truth_models;

  if (!st.have_reference) run_plan();
  if (!st.have_sensitivity) run_hdsa();
  if (!st.have_design) run_design();

  const int d = static_cast<int>(cfg_.oed.candidates.size());

  // all randomness drawn up-front so scheduling cannot change results
  std::vector<std::vector<int>> designs;  // selected candidate indices
  {
    std::vector<int> oed_points;
    for (int jx = 0; jx < d; ++jx)
      if (st.design.w[jx]) oed_points.push_back(jx);
    designs.push_back(oed_points);
  }
  for (int i = 0; i < n_designs; ++i) {
    CounterRng rng = CounterRng(st.seed, kDesignStream).split(i);
    std::vector<int> perm(d);
    for (int jx = 0; jx < d; ++jx) perm[jx] = jx;
    for (int jx = d - 1; jx > 0; --jx)
      std::swap(perm[jx], perm[rng.next_below(jx + 1)]);
    std::vector<int> pick;
    double cost = 0.0;
    for (int jx : perm) {
      if (cost + cfg_.oed.cost <= cfg_.oed.budget) {
        pick.push_back(jx);
        cost += cfg_.oed.cost;
      }
    }
    std::sort(pick.begin(), pick.end());
    designs.push_back(pick);
  }

  // random truth models: nominal perturbed by a random polynomial
  std::vector<std::unique_ptr<DynamicsModel>> truths;
  for (int t = 0; t < n_truth; ++t) {
    auto model = std::make_unique<DynamicsModel>(*st.planning);
    model->basis.functions.clear();
    const CounterRng base = CounterRng(st.seed, kTruthStream).split(t);
    int comp_idx = 0;
    for (auto& comp : model->surrogate.components) {
      const auto extra = random_poly_terms(comp.input_dim(), cfg_.compare.poly_degree,
                                           cfg_.compare.coeff_range, base.split(comp_idx + 1));
      comp.nominal.insert(comp.nominal.end(), extra.begin(), extra.end());
      ++comp_idx;
    }
    truths.push_back(std::move(model));
  }

  const int n_rows = static_cast<int>(designs.size());
  std::vector<std::vector<CompareCell>> cells(n_rows, std::vector<CompareCell>(n_truth));

  const LqrWeights weights =
      lqr_weights(cfg_, st.planning->state_dim, st.planning->control_dim);
  RiccatiOptions ric;
  ric.store_points = cfg_.lqr.store_points;
  SimulationOptions sopts;
  sopts.samples = cfg_.simulate.samples;
  sopts.ode.rel_tol = cfg_.simulate.rel_tol;
  sopts.ode.abs_tol = cfg_.simulate.abs_tol;

  auto run_cell = [&](int row, int t) {
    CompareCell& cell = cells[row][t];
    try {
      std::vector<VectorXd> points;
      for (int jx : designs[row]) points.push_back(cfg_.oed.candidates[jx]);
      const DesignEvaluation ev = evaluate_truth(cfg_, *truths[t], points);
      FitOptions fopts;
      if (cfg_.surrogate.fixed_width)
        fopts.widths =
            VectorXd::Constant(std::max<std::size_t>(points.size(), 1), cfg_.surrogate.width);
      fopts.width_fallback = cfg_.surrogate.width;
      const ModelSurrogate fitted = fit_update(
          st.planning->surrogate, ev, sampling_map(cfg_, st.planning->output_dim()), fopts);
      DynamicsModel model = *st.planning;
      model.surrogate = fitted;
      OcpProblem ocp = build_ocp(cfg_, &model, st.ocp.grid);
      SolveOptions opts = solver_options(cfg_);
      const DiscreteSolution ref = solve_ocp(ocp, st.reference, opts);
      const GainSchedule gains = solve_riccati(ocp, ref, weights, ric);
      const SimulationResult sim = simulate_closed_loop(ocp, ref, *truths[t], &gains, sopts);
      cell.effort = sim.control_effort;
      cell.error = sim.tracking_error;
      cell.ok = true;
    } catch (const std::exception&) {
      cell.ok = false;  // recorded as a missing cell below
    }
  };

  const int total = n_rows * n_truth;
  int workers = cfg_.compare.workers > 0
                    ? cfg_.compare.workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = std::min(workers, total);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int idx = next.fetch_add(1); idx < total; idx = next.fetch_add(1))
      run_cell(idx / n_truth, idx % n_truth);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int wi = 0; wi < workers; ++wi) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<CompareRow> rows(n_rows);
  for (int row = 0; row < n_rows; ++row) {
    CompareRow& out = rows[row];
    out.id = row == 0 ? "oed" : "random_" + std::to_string(row - 1);
    double effort = 0.0, error = 0.0;
    for (int t = 0; t < n_truth; ++t) {
      if (cells[row][t].ok) {
        effort += cells[row][t].effort;
        error += cells[row][t].error;
        ++out.cells_ok;
      } else {
        ++out.cells_failed;
      }
    }
    out.mean_effort = out.cells_ok ? effort / out.cells_ok : std::nan("");
    out.mean_error = out.cells_ok ? error / out.cells_ok : std::nan("");
  }

  std::ofstream csv(out_dir_ + "/compare.csv");
  csv << "design_id,mean_effort,mean_error,cells_ok,cells_failed\n";
  for (const auto& row : rows)
    csv << row.id << "," << csv_num(row.mean_effort) << "," << csv_num(row.mean_error) << ","
        << row.cells_ok << "," << row.cells_failed << "\n";
  return rows;
}

Json Pipeline::summary() const {
  const State& st = *state_;
  Json j;
  j["schema_version"] = 1;
  j["output_dir"] = out_dir_;
  j["model"] = cfg_.kind == ModelKind::Zermelo ? "zermelo" : "glide";
  if (st.have_reference) {
    j["baseline"]["objective"] = st.baseline_objective;
    j["baseline"]["T"] = st.reference.T;
    j["baseline"]["kkt_residual"] = st.reference.kkt_residual;
  }
  if (st.have_sensitivity) {
    int argmax = 0;
    const double dmax = st.sensitivity.indices.maxCoeff(&argmax);
    j["sensitivity"]["max_index"] = dmax;
    j["sensitivity"]["argmax"] = argmax;
  }
  if (st.have_design) {
    j["design"]["w"] = st.design.w;
    j["design"]["objective"] = st.design.objective;
    j["design"]["certified"] = st.design.certified;
    j["design"]["method"] = st.design.method;
  }
  if (st.have_update) {
    j["updated"]["objective"] = st.updated_objective;
    j["updated"]["T"] = st.updated_reference.T;
  }
  if (st.have_report) {
    j["effort_reduction_ratio"] = st.report.effort_reduction_ratio;
    j["closed_pre_effort"] = st.report.closed_pre.control_effort;
    j["closed_post_effort"] = st.report.closed_post.control_effort;
  }
  return j;
}

}  // namespace sdoed
