#ifndef SDOED_SURROGATE_HPP
#define SDOED_SURROGATE_HPP

#include <vector>

#include "sdoed/dynamics.hpp"

namespace sdoed {

// Truth-model evaluations at selected design points. Points live in the
// global experiment coordinate space; per-component projections are defined
// by ComponentSampling axis lists.
struct DesignEvaluation {
  std::vector<VectorXd> points;
  MatrixXd values;  // one row per point, one column per informed component
};

// Which global point axes feed a component's input space (in component
// input order).
struct ComponentSampling {
  int component = 0;
  std::vector<int> axes;
};

struct FitOptions {
  // Gaussian widths per design point; empty selects
  // (median pairwise distance)^-2 per component.
  VectorXd widths;
  double width_fallback = 1.0;     // used when a component sees a single point
  double condition_limit = 1e12;
};

// Append radial-basis corrections so the surrogate interpolates the supplied
// truth values at the design points. Components without sampling entries are
// returned unchanged. Exactly coincident projected points are merged; a
// near-singular interpolation system raises SolveError advising a width
// change.
ModelSurrogate fit_update(const ModelSurrogate& nominal, const DesignEvaluation& eval,
                          const std::vector<ComponentSampling>& sampling,
                          const FitOptions& opts = {});

}  // namespace sdoed

#endif
