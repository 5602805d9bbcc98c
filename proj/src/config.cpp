#include "sdoed/config.hpp"

#include <cmath>
#include <fstream>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

[[noreturn]] void fail(const std::string& what) { throw ConfigError("config: " + what); }

const Json& need(const Json& j, const char* key) {
  if (!j.contains(key)) fail(std::string("missing key '") + key + "'");
  return j.at(key);
}

double need_number(const Json& j, const char* key) {
  const Json& v = need(j, key);
  if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

double number_or(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) fail(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

int int_or(const Json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<int>();
}

bool bool_or(const Json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) fail(std::string("'") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

TermFactor::Fn parse_fn(const std::string& s) {
  if (s == "pow") return TermFactor::Fn::Power;
  if (s == "sin_half_pi") return TermFactor::Fn::SinHalfPi;
  if (s == "cos_half_pi") return TermFactor::Fn::CosHalfPi;
  fail("unknown term factor '" + s + "' (expected pow, sin_half_pi, cos_half_pi)");
}

std::string fn_name(TermFactor::Fn fn) {
  switch (fn) {
    case TermFactor::Fn::Power: return "pow";
    case TermFactor::Fn::SinHalfPi: return "sin_half_pi";
    case TermFactor::Fn::CosHalfPi: return "cos_half_pi";
  }
  return "pow";
}

}  // namespace

Json vector_to_json(const VectorXd& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) fail("expected a numeric array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

Json matrix_to_json(const MatrixXd& m) {
  Json out = Json::array();
  for (int i = 0; i < m.rows(); ++i) out.push_back(vector_to_json(m.row(i).transpose()));
  return out;
}

MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) fail("expected a non-empty array of rows");
  const VectorXd first = vector_from_json(j.at(0));
  MatrixXd m(j.size(), first.size());
  m.row(0) = first.transpose();
  for (std::size_t i = 1; i < j.size(); ++i) m.row(i) = vector_from_json(j.at(i)).transpose();
  return m;
}

Json dict_terms_to_json(const std::vector<DictTerm>& terms) {
  Json out = Json::array();
  for (const auto& t : terms) {
    Json jt;
    jt["coeff"] = t.coeff;
    Json fs = Json::array();
    for (const auto& f : t.factors) {
      Json jf;
      jf["axis"] = f.axis;
      jf["fn"] = fn_name(f.fn);
      if (f.fn == TermFactor::Fn::Power) jf["exponent"] = f.exponent;
      fs.push_back(jf);
    }
    jt["factors"] = fs;
    out.push_back(jt);
  }
  return out;
}

std::vector<DictTerm> dict_terms_from_json(const Json& j) {
  if (!j.is_array()) fail("dictionary terms must be an array");
  std::vector<DictTerm> terms;
  for (const auto& jt : j) {
    DictTerm t;
    t.coeff = need_number(jt, "coeff");
    if (jt.contains("factors")) {
      for (const auto& jf : jt.at("factors")) {
        TermFactor f;
        f.axis = jf.value("axis", 0);
        f.fn = parse_fn(jf.value("fn", std::string("pow")));
        f.exponent = jf.value("exponent", 1);
        if (f.fn == TermFactor::Fn::Power && f.exponent < 0) fail("negative exponent");
        t.factors.push_back(f);
      }
    }
    terms.push_back(t);
  }
  return terms;
}

Json surrogate_to_json(const ModelSurrogate& s) {
  Json out = Json::array();
  for (const auto& comp : s.components) {
    Json jc;
    jc["name"] = comp.name;
    jc["nominal"] = dict_terms_to_json(comp.nominal);
    Json corr = Json::array();
    for (const auto& t : comp.correction) {
      Json jt;
      jt["center"] = vector_to_json(t.center);
      jt["width"] = t.width;
      jt["coeff"] = t.coeff;
      corr.push_back(jt);
    }
    jc["correction"] = corr;
    out.push_back(jc);
  }
  return out;
}

void surrogate_corrections_from_json(const Json& j, ModelSurrogate& s) {
  if (!j.is_array() || static_cast<int>(j.size()) != s.output_dim())
    fail("surrogate component count mismatch");
  for (int k = 0; k < s.output_dim(); ++k) {
    auto& comp = s.components[k];
    comp.correction.clear();
    for (const auto& jt : j.at(k).at("correction")) {
      RbfTerm t;
      t.center = vector_from_json(jt.at("center"));
      t.width = need_number(jt, "width");
      t.coeff = need_number(jt, "coeff");
      if (t.center.size() != comp.input_dim()) fail("correction center dimension mismatch");
      comp.correction.push_back(t);
    }
  }
}

namespace {

ZermeloParams parse_zermelo(const Json& j) {
  ZermeloParams p;
  p.current = dict_terms_from_json(need(j, "current"));
  if (j.contains("heading_bounds")) {
    const VectorXd b = vector_from_json(j.at("heading_bounds"));
    if (b.size() != 2 || !(b(0) < b(1))) fail("heading_bounds must be [lo, hi]");
    p.heading_min = b(0);
    p.heading_max = b(1);
  }
  return p;
}

GlideParams parse_glide(const Json& j) {
  GlideParams p;
  p.mass = number_or(j, "mass", p.mass);
  p.area_ref = number_or(j, "area_ref", p.area_ref);
  p.rho0 = number_or(j, "rho0", p.rho0);
  p.scale_height = number_or(j, "scale_height", p.scale_height);
  p.gravity = number_or(j, "gravity", p.gravity);
  p.sound_speed = number_or(j, "sound_speed", p.sound_speed);
  p.heat_coeff = number_or(j, "heat_coeff", p.heat_coeff);
  p.heat_max = number_or(j, "heat_max", p.heat_max);
  p.dyn_pressure_max = number_or(j, "dyn_pressure_max", p.dyn_pressure_max);
  p.load_max = number_or(j, "load_max", p.load_max);
  p.v_min = number_or(j, "v_min", p.v_min);
  if (j.contains("nofly")) {
    const Json& nf = j.at("nofly");
    p.nofly_enabled = bool_or(nf, "enabled", true);
    p.nofly_x = need_number(nf, "x");
    p.nofly_y = need_number(nf, "y");
    p.nofly_radius = need_number(nf, "radius");
  }
  p.cn = dict_terms_from_json(need(j, "cn"));
  p.ca = dict_terms_from_json(need(j, "ca"));
  p.cy = dict_terms_from_json(need(j, "cy"));
  p.control_lower = vector_from_json(need(j, "control_lower"));
  p.control_upper = vector_from_json(need(j, "control_upper"));
  if (p.control_lower.size() != 3 || p.control_upper.size() != 3)
    fail("glide control bounds must have three entries (alpha, beta, phi)");
  for (int k = 0; k < 3; ++k)
    if (!(p.control_lower(k) < p.control_upper(k))) fail("glide control bounds out of order");
  return p;
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0)) fail(std::string(what) + " must be positive");
}

}  // namespace

WorkflowConfig parse_config(const Json& j) {
  WorkflowConfig cfg;
  if (!j.contains("schema_version")) fail("missing schema_version");
  cfg.schema_version = j.at("schema_version").get<int>();
  if (cfg.schema_version != 1) fail("unsupported schema_version");

  const Json& jm = need(j, "model");
  const std::string kind = need(jm, "kind").get<std::string>();
  const Json& jt = need(j, "truth");

  if (kind == "zermelo") {
    cfg.kind = ModelKind::Zermelo;
    cfg.zermelo = parse_zermelo(jm);
    cfg.zermelo_truth = parse_zermelo(jt);
    cfg.x0 = VectorXd::Zero(2);
    cfg.guess_target = j.contains("initial_guess")
                           ? vector_from_json(need(j.at("initial_guess"), "target"))
                           : (VectorXd(2) << 1.0, 0.0).finished();
    if (cfg.guess_target.size() != 2) fail("zermelo initial_guess target must have 2 entries");
  } else if (kind == "glide") {
    cfg.kind = ModelKind::Glide;
    cfg.glide = parse_glide(jm);
    cfg.glide_truth = parse_glide(jt);
    cfg.x0 = vector_from_json(need(j, "x0"));
    if (cfg.x0.size() != 6) fail("glide x0 must have 6 entries");
    cfg.glide_target = vector_from_json(need(j, "target"));
    if (cfg.glide_target.size() != 3) fail("glide target must have 3 entries");
    cfg.free_time = true;
    const Json& jT = need(j, "final_time");
    cfg.T_nominal = need_number(jT, "nominal");
    cfg.T_min = need_number(jT, "min");
    cfg.T_max = need_number(jT, "max");
    if (!(cfg.T_min > 0.0 && cfg.T_min <= cfg.T_nominal && cfg.T_nominal <= cfg.T_max))
      fail("final_time must satisfy 0 < min <= nominal <= max");
    if (j.contains("initial_guess")) {
      cfg.guess_target = vector_from_json(need(j.at("initial_guess"), "target"));
      if (cfg.guess_target.size() != 6) fail("glide initial_guess target must have 6 entries");
    }
  } else {
    fail("model.kind must be 'zermelo' or 'glide'");
  }

  const Json& jd = need(j, "discretization");
  for (const auto& b : need(jd, "boundaries")) cfg.discretization.boundaries.push_back(b.get<double>());
  for (const auto& o : need(jd, "orders")) cfg.discretization.orders.push_back(o.get<int>());
  if (cfg.discretization.boundaries.size() != cfg.discretization.orders.size() + 1)
    fail("discretization needs one more boundary than orders");
  for (int o : cfg.discretization.orders)
    if (o < 4) fail("discretization orders must be at least 4");
  cfg.discretization.adaptation_rounds = int_or(jd, "adaptation_rounds", 0);
  if (cfg.discretization.adaptation_rounds < 0 || cfg.discretization.adaptation_rounds > 10)
    fail("adaptation_rounds must be in [0, 10]");
  cfg.discretization.control_smoothing = number_or(jd, "control_smoothing", 0.0);
  if (cfg.discretization.control_smoothing < 0.0) fail("control_smoothing must be nonnegative");

  if (j.contains("nlp")) {
    const Json& jn = j.at("nlp");
    cfg.nlp.tol = number_or(jn, "tol", cfg.nlp.tol);
    check_positive(cfg.nlp.tol, "nlp.tol");
    cfg.nlp.max_iterations = int_or(jn, "max_iterations", cfg.nlp.max_iterations);
    if (cfg.nlp.max_iterations < 1) fail("nlp.max_iterations must be positive");
    cfg.nlp.log_iterations = bool_or(jn, "log_iterations", false);
  }

  if (j.contains("tracking")) {
    cfg.tracking_alpha = number_or(j.at("tracking"), "alpha", cfg.tracking_alpha);
    check_positive(cfg.tracking_alpha, "tracking.alpha");
  }

  if (j.contains("lqr")) {
    const Json& jl = j.at("lqr");
    cfg.lqr.state_weight = number_or(jl, "state_weight", cfg.lqr.state_weight);
    cfg.lqr.control_weight = number_or(jl, "control_weight", cfg.lqr.control_weight);
    cfg.lqr.terminal_weight = number_or(jl, "terminal_weight", cfg.lqr.terminal_weight);
    check_positive(cfg.lqr.control_weight, "lqr.control_weight");
    if (cfg.lqr.state_weight < 0 || cfg.lqr.terminal_weight < 0)
      fail("lqr state/terminal weights must be nonnegative");
    cfg.lqr.store_points = int_or(jl, "store_points", cfg.lqr.store_points);
    if (cfg.lqr.store_points < 2) fail("lqr.store_points must be at least 2");
  }

  const Json& jb = need(j, "basis");
  if (cfg.kind == ModelKind::Zermelo) {
    BasisConfig1d b;
    b.count = int_or(jb, "count", 30);
    if (b.count < 1) fail("basis.count must be positive");
    const VectorXd range = vector_from_json(need(jb, "range"));
    if (range.size() != 2 || !(range(0) < range(1))) fail("basis.range must be [lo, hi]");
    b.lo = range(0);
    b.hi = range(1);
    b.width = need_number(jb, "width");
    check_positive(b.width, "basis.width");
    cfg.basis_1d = b;
  } else {
    if (!jb.contains("grids")) fail("glide basis needs 'grids'");
    for (const auto& jg : jb.at("grids")) {
      BasisGridConfig g;
      g.component = need(jg, "component").get<int>();
      for (const auto& ja : need(jg, "axes")) {
        std::vector<double> axis;
        for (const auto& v : ja) axis.push_back(v.get<double>());
        if (axis.empty()) fail("basis grid axis must be non-empty");
        g.axis_grids.push_back(axis);
      }
      g.width = need_number(jg, "width");
      check_positive(g.width, "basis grid width");
      cfg.basis_grids.push_back(g);
    }
    if (cfg.basis_grids.empty()) fail("glide basis needs at least one grid");
  }

  const Json& jo = need(j, "oed");
  if (jo.contains("candidates")) {
    for (const auto& jc : jo.at("candidates")) cfg.oed.candidates.push_back(vector_from_json(jc));
  } else if (cfg.kind == ModelKind::Zermelo) {
    const int count = int_or(jo, "candidate_count", 30);
    if (count < 1) fail("oed.candidate_count must be positive");
    const VectorXd range = vector_from_json(need(jo, "candidate_range"));
    if (range.size() != 2 || !(range(0) < range(1))) fail("oed.candidate_range must be [lo, hi]");
    for (int i = 0; i < count; ++i)
      cfg.oed.candidates.push_back(VectorXd::Constant(
          1, count == 1 ? 0.5 * (range(0) + range(1))
                        : range(0) + (range(1) - range(0)) * i / (count - 1.0)));
  } else {
    fail("glide oed needs an explicit 'candidates' list");
  }
  const std::string gmode = jo.value("gamma_mode", std::string("fixed"));
  if (gmode == "fixed")
    cfg.oed.gamma_mode = OedConfig::GammaMode::Fixed;
  else if (gmode == "coordinate_scaled")
    cfg.oed.gamma_mode = OedConfig::GammaMode::CoordinateScaled;
  else
    fail("oed.gamma_mode must be 'fixed' or 'coordinate_scaled'");
  cfg.oed.gamma_fixed = number_or(jo, "gamma_fixed", cfg.oed.gamma_fixed);
  cfg.oed.gamma0 = number_or(jo, "gamma0", cfg.oed.gamma0);
  check_positive(cfg.oed.gamma_fixed, "oed.gamma_fixed");
  check_positive(cfg.oed.gamma0, "oed.gamma0");
  cfg.oed.epsilon = number_or(jo, "epsilon", 0.0);
  if (cfg.oed.epsilon < 0.0) fail("oed.epsilon must be nonnegative");
  cfg.oed.cost = number_or(jo, "cost", 1.0);
  check_positive(cfg.oed.cost, "oed.cost");
  cfg.oed.budget = need_number(jo, "budget");
  if (cfg.oed.budget < 0.0) fail("oed.budget must be nonnegative");
  if (jo.contains("error_weights")) {
    for (const auto& v : jo.at("error_weights")) cfg.oed.error_weights.push_back(v.get<double>());
    for (double v : cfg.oed.error_weights)
      if (!(v >= 0.0)) fail("oed.error_weights must be nonnegative");
  }

  if (j.contains("surrogate")) {
    const Json& js = j.at("surrogate");
    cfg.surrogate.fixed_width = bool_or(js, "fixed_width", false);
    cfg.surrogate.width = number_or(js, "width", cfg.surrogate.width);
    check_positive(cfg.surrogate.width, "surrogate.width");
  }

  if (j.contains("compare")) {
    const Json& jc = j.at("compare");
    cfg.compare.designs = int_or(jc, "designs", cfg.compare.designs);
    cfg.compare.truth_models = int_or(jc, "truth_models", cfg.compare.truth_models);
    if (cfg.compare.designs < 0 || cfg.compare.truth_models < 1)
      fail("compare counts out of range");
    cfg.compare.poly_degree = int_or(jc, "poly_degree", cfg.compare.poly_degree);
    if (cfg.compare.poly_degree < 0 || cfg.compare.poly_degree > 8)
      fail("compare.poly_degree must be in [0, 8]");
    cfg.compare.coeff_range = number_or(jc, "coeff_range", cfg.compare.coeff_range);
    if (cfg.compare.coeff_range < 0.0) fail("compare.coeff_range must be nonnegative");
    cfg.compare.workers = int_or(jc, "workers", 0);
    if (cfg.compare.workers < 0) fail("compare.workers must be nonnegative");
  }

  if (j.contains("simulate")) {
    const Json& js = j.at("simulate");
    cfg.simulate.samples = int_or(js, "samples", cfg.simulate.samples);
    if (cfg.simulate.samples < 2) fail("simulate.samples must be at least 2");
    cfg.simulate.rel_tol = number_or(js, "rel_tol", cfg.simulate.rel_tol);
    cfg.simulate.abs_tol = number_or(js, "abs_tol", cfg.simulate.abs_tol);
    check_positive(cfg.simulate.rel_tol, "simulate.rel_tol");
    check_positive(cfg.simulate.abs_tol, "simulate.abs_tol");
  }

  if (j.contains("seed")) {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.seed_set = true;
  }
  return cfg;
}

WorkflowConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace sdoed
