#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sdoed/errors.hpp"
#include "sdoed/models.hpp"
#include "sdoed/surrogate.hpp"

using namespace sdoed;

namespace {

ModelSurrogate zermelo_like_surrogate() {
  // planning current 0.35 + 0.65 sin(pi x/2)
  ZermeloParams zp;
  zp.current = {DictTerm{0.35, {}},
                DictTerm{0.65, {TermFactor{0, TermFactor::Fn::SinHalfPi, 1}}}};
  return make_zermelo_model(zp).surrogate;
}

// truth: the planning current minus a smooth quadratic defect
double truth_current(double x1) {
  return 0.35 + 0.65 * std::sin(0.5 * M_PI * x1) - 0.22 * x1 * x1;
}

DesignEvaluation eval_at(const std::vector<double>& pts) {
  DesignEvaluation ev;
  ev.values.resize(pts.size(), 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ev.points.push_back(VectorXd::Constant(1, pts[i]));
    ev.values(i, 0) = truth_current(pts[i]);
  }
  return ev;
}

const std::vector<ComponentSampling> kSampling = {{0, {0}}};

}  // namespace

TEST_CASE("matching data leaves the surrogate unchanged") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  DesignEvaluation ev;
  for (double x : {0.2, 0.6, 1.0}) ev.points.push_back(VectorXd::Constant(1, x));
  ev.values.resize(3, 1);
  for (int i = 0; i < 3; ++i) ev.values(i, 0) = nominal.components[0].value(ev.points[i]);

  const ModelSurrogate fit = fit_update(nominal, ev, kSampling);
  REQUIRE(fit.components[0].correction.size() == 3);
  for (const auto& t : fit.components[0].correction) CHECK(std::abs(t.coeff) <= 1e-12);
  for (double x : {0.0, 0.31, 0.77, 1.2}) {
    const VectorXd s = VectorXd::Constant(1, x);
    CHECK(fit.components[0].value(s) ==
          doctest::Approx(nominal.components[0].value(s)).epsilon(1e-12));
  }
}

TEST_CASE("single point reduces to the 1x1 system") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  const DesignEvaluation ev = eval_at({0.8});
  FitOptions opts;
  opts.width_fallback = 25.0;
  const ModelSurrogate fit = fit_update(nominal, ev, kSampling, opts);
  REQUIRE(fit.components[0].correction.size() == 1);
  const double expected =
      truth_current(0.8) - nominal.components[0].value(VectorXd::Constant(1, 0.8));
  CHECK(fit.components[0].correction[0].coeff == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("three-point update interpolates and improves the fit in between") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  const std::vector<double> pts = {0.45, 0.8, 1.1};
  const ModelSurrogate fit = fit_update(nominal, eval_at(pts), kSampling);

  for (double x : pts) {
    const VectorXd s = VectorXd::Constant(1, x);
    CHECK(std::abs(fit.components[0].value(s) - truth_current(x)) <= 1e-10);
  }

  // sup-norm error over the sampled region shrinks versus the nominal model
  double err_fit = 0.0, err_nom = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double x = 0.45 + (1.1 - 0.45) * i / 100.0;
    const VectorXd s = VectorXd::Constant(1, x);
    err_fit = std::max(err_fit, std::abs(fit.components[0].value(s) - truth_current(x)));
    err_nom = std::max(err_nom, std::abs(nominal.components[0].value(s) - truth_current(x)));
  }
  CHECK(err_fit < err_nom);
}

TEST_CASE("refitting identical data reproduces the coefficients") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  const DesignEvaluation ev = eval_at({0.3, 0.7, 1.05});
  const ModelSurrogate fit1 = fit_update(nominal, ev, kSampling);
  const ModelSurrogate fit2 = fit_update(nominal, ev, kSampling);
  for (std::size_t i = 0; i < fit1.components[0].correction.size(); ++i)
    CHECK(std::abs(fit1.components[0].correction[i].coeff -
                   fit2.components[0].correction[i].coeff) <= 1e-12);
}

TEST_CASE("correction decays away from the design points") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  const std::vector<double> pts = {0.45, 0.8, 1.1};
  const ModelSurrogate fit = fit_update(nominal, eval_at(pts), kSampling);

  double beta_max = 0.0, width_min = 1e300;
  for (const auto& t : fit.components[0].correction) {
    beta_max = std::max(beta_max, std::abs(t.coeff));
    width_min = std::min(width_min, t.width);
  }
  // probe five widths away from every center
  const double spread = 5.0 / std::sqrt(width_min);
  for (double x : {1.1 + spread, 0.45 - spread}) {
    const VectorXd s = VectorXd::Constant(1, x);
    const double correction = fit.components[0].value(s) - nominal.components[0].value(s);
    CHECK(std::abs(correction) <= 1e-8 * std::max(1.0, beta_max));
  }
}

TEST_CASE("untouched components come back unchanged") {
  GlideParams gp;
  gp.cn = {DictTerm{0.1, {}}};
  gp.ca = {DictTerm{0.2, {}}};
  gp.cy = {DictTerm{-0.3, {}}};
  const ModelSurrogate nominal = make_glide_model(gp).surrogate;

  DesignEvaluation ev;
  ev.points.push_back((VectorXd(3) << 4.0, 0.1, 0.0).finished());
  ev.values.resize(1, 3);
  ev.values(0, 0) = 0.15;
  // only CN (component 0, axes M and alpha) is informed
  const std::vector<ComponentSampling> sampling = {{0, {0, 1}}};
  FitOptions opts;
  opts.width_fallback = 2.0;
  const ModelSurrogate fit = fit_update(nominal, ev, sampling, opts);
  CHECK(fit.components[0].correction.size() == 1);
  CHECK(fit.components[1].correction.empty());
  CHECK(fit.components[2].correction.empty());
}

TEST_CASE("points distinct only in unused axes merge instead of breaking the fit") {
  GlideParams gp;
  gp.cn = {DictTerm{0.1, {}}};
  gp.ca = {DictTerm{0.2, {}}};
  gp.cy = {DictTerm{-0.3, {}}};
  const ModelSurrogate nominal = make_glide_model(gp).surrogate;

  DesignEvaluation ev;
  ev.points.push_back((VectorXd(3) << 4.0, 0.1, -0.05).finished());
  ev.points.push_back((VectorXd(3) << 4.0, 0.1, 0.05).finished());  // same (M, alpha)
  ev.values.resize(2, 3);
  ev.values.setConstant(0.15);
  const std::vector<ComponentSampling> sampling = {{0, {0, 1}}};
  FitOptions opts;
  opts.width_fallback = 2.0;
  const ModelSurrogate fit = fit_update(nominal, ev, sampling, opts);
  CHECK(fit.components[0].correction.size() == 1);  // merged
}

TEST_CASE("near-coincident points trip the condition guard") {
  const ModelSurrogate nominal = zermelo_like_surrogate();
  const DesignEvaluation ev = eval_at({0.5, 0.5 + 1e-9});
  FitOptions opts;
  opts.widths = VectorXd::Constant(2, 1.0);
  CHECK_THROWS_AS(fit_update(nominal, ev, kSampling, opts), SolveError);
}
