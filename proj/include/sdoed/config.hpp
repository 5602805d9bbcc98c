#ifndef SDOED_CONFIG_HPP
#define SDOED_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

// vendored single-header nlohmann/json
#include <json.hpp>

#include "sdoed/models.hpp"
#include "sdoed/surrogate.hpp"

namespace sdoed {

using Json = nlohmann::json;

enum class ModelKind { Zermelo, Glide };

struct DiscretizationConfig {
  std::vector<double> boundaries;
  std::vector<int> orders;
  int adaptation_rounds = 0;
  double control_smoothing = 0.0;
};

struct NlpConfig {
  double tol = 1e-6;
  int max_iterations = 200;
  bool log_iterations = false;
};

struct LqrConfig {
  double state_weight = 1.0;
  double control_weight = 0.1;
  double terminal_weight = 1.0;
  int store_points = 201;
};

struct BasisConfig1d {
  int count = 30;
  double lo = 0.0, hi = 1.3;
  double width = 150.0;
};

struct BasisGridConfig {
  int component = 0;
  std::vector<std::vector<double>> axis_grids;
  double width = 1.0;
};

struct OedConfig {
  // candidate experiment anchors in the global experiment coordinates
  std::vector<VectorXd> candidates;
  enum class GammaMode { Fixed, CoordinateScaled } gamma_mode = GammaMode::Fixed;
  double gamma_fixed = 4.0;
  double gamma0 = 40.0;  // scale for the coordinate heuristic
  double epsilon = 0.0;
  double cost = 1.0;
  double budget = 3.0;
  std::vector<double> error_weights;  // empty = identity
};

struct SurrogateConfig {
  bool fixed_width = false;
  double width = 25.0;
};

struct CompareConfig {
  int designs = 100;
  int truth_models = 100;
  int poly_degree = 4;
  double coeff_range = 0.15;
  int workers = 0;  // 0 = hardware concurrency
};

struct SimulateConfig {
  int samples = 401;
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
};

struct WorkflowConfig {
  int schema_version = 1;
  ModelKind kind = ModelKind::Zermelo;
  ZermeloParams zermelo;          // planning model (kind == Zermelo)
  ZermeloParams zermelo_truth;
  GlideParams glide;              // planning model (kind == Glide)
  GlideParams glide_truth;
  VectorXd x0;
  VectorXd guess_target;
  bool free_time = false;
  double T_nominal = 1.0, T_min = 0.1, T_max = 10.0;
  VectorXd glide_target;  // target position for the glide final cost

  DiscretizationConfig discretization;
  NlpConfig nlp;
  double tracking_alpha = 1e-2;
  LqrConfig lqr;
  std::optional<BasisConfig1d> basis_1d;
  std::vector<BasisGridConfig> basis_grids;
  OedConfig oed;
  SurrogateConfig surrogate;
  CompareConfig compare;
  SimulateConfig simulate;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

WorkflowConfig load_config(const std::string& path);
WorkflowConfig parse_config(const Json& j);

// dictionary/correction serialization shared by configs and artifacts
Json dict_terms_to_json(const std::vector<DictTerm>& terms);
std::vector<DictTerm> dict_terms_from_json(const Json& j);
Json surrogate_to_json(const ModelSurrogate& s);
void surrogate_corrections_from_json(const Json& j, ModelSurrogate& s);

Json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const Json& j);
Json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const Json& j);

}  // namespace sdoed

#endif
