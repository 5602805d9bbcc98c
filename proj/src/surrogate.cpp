#include "sdoed/surrogate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "sdoed/errors.hpp"

namespace sdoed {

ModelSurrogate fit_update(const ModelSurrogate& nominal, const DesignEvaluation& eval,
                          const std::vector<ComponentSampling>& sampling,
                          const FitOptions& opts) {
  const int n_points = static_cast<int>(eval.points.size());
  if (n_points == 0) return nominal;
  if (eval.values.rows() != n_points)
    throw ContractViolation("fit_update: one value row per point required");
  if (opts.widths.size() != 0 && opts.widths.size() != n_points)
    throw ContractViolation("fit_update: one width per point required");

  ModelSurrogate updated = nominal;
  for (const auto& samp : sampling) {
    if (samp.component < 0 || samp.component >= nominal.output_dim())
      throw ContractViolation("fit_update: bad component index");
    SurrogateComponent& comp = updated.components[samp.component];
    if (static_cast<int>(samp.axes.size()) != comp.input_dim())
      throw ContractViolation("fit_update: axis list does not match component '" + comp.name +
                              "' input dimension");

    // project points into the component's input space, merging exact repeats
    std::vector<VectorXd> centers;
    std::vector<double> targets;
    for (int p = 0; p < n_points; ++p) {
      VectorXd c(comp.input_dim());
      for (int a = 0; a < comp.input_dim(); ++a) c(a) = eval.points[p](samp.axes[a]);
      bool merged = false;
      for (std::size_t e = 0; e < centers.size(); ++e) {
        if ((centers[e] - c).lpNorm<Eigen::Infinity>() == 0.0) {
          merged = true;  // same projected input; values agree by construction
          break;
        }
      }
      if (!merged) {
        centers.push_back(c);
        targets.push_back(eval.values(p, samp.component));
      }
    }
    const int nc = static_cast<int>(centers.size());

    // widths: supplied per point, or median pairwise distance per component
    std::vector<double> widths(nc);
    if (opts.widths.size() != 0) {
      for (int e = 0; e < nc; ++e) widths[e] = opts.widths(e % opts.widths.size());
    } else if (nc == 1) {
      widths[0] = opts.width_fallback;
    } else {
      std::vector<double> dists;
      for (int a = 0; a < nc; ++a)
        for (int b = a + 1; b < nc; ++b) dists.push_back((centers[a] - centers[b]).norm());
      std::sort(dists.begin(), dists.end());
      const double median = dists[dists.size() / 2];
      if (median <= 0.0)
        throw SolveError("fit_update: coincident design points in component '" + comp.name + "'");
      const double w = 1.0 / (median * median);
      std::fill(widths.begin(), widths.end(), w);
    }
    for (double w : widths)
      if (!(w > 0.0)) throw ContractViolation("fit_update: widths must be positive");

    // interpolation system Psi beta = truth - current surrogate
    MatrixXd psi(nc, nc);
    for (int rowi = 0; rowi < nc; ++rowi)
      for (int col = 0; col < nc; ++col)
        psi(rowi, col) =
            std::exp(-widths[col] * (centers[rowi] - centers[col]).squaredNorm());
    VectorXd rhs(nc);
    for (int e = 0; e < nc; ++e) rhs(e) = targets[e] - comp.value(centers[e]);

    Eigen::JacobiSVD<MatrixXd> svd(psi, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double cond = svd.singularValues()(0) / svd.singularValues()(nc - 1);
    if (!(cond < opts.condition_limit))
      throw SolveError("fit_update: interpolation matrix condition " + std::to_string(cond) +
                       " in component '" + comp.name +
                       "'; decrease the RBF widths or drop near-coincident points");
    const VectorXd beta = svd.solve(rhs);
    const double resid = (psi * beta - rhs).norm();
    if (resid > 1e-10 * std::max(1.0, rhs.norm()))
      throw SolveError("fit_update: interpolation solve residual " + std::to_string(resid) +
                       " in component '" + comp.name + "'");

    for (int e = 0; e < nc; ++e) {
      RbfTerm term;
      term.center = centers[e];
      term.width = widths[e];
      term.coeff = beta(e);
      comp.correction.push_back(term);
    }
  }
  return updated;
}

}  // namespace sdoed
