#include "sdoed/oed.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

#include "sdoed/errors.hpp"

namespace sdoed {

namespace {

void validate(const DesignProblem& dp) {
  const int q = static_cast<int>(dp.c.size());
  const int d = static_cast<int>(dp.kappa.size());
  if (q == 0 || d == 0) throw ContractViolation("oed: empty design problem");
  if (dp.r.rows() != q || dp.r.cols() != d)
    throw ContractViolation("oed: reduction matrix must be q x d");
  for (int i = 0; i < q; ++i)
    if (!(dp.c(i) >= 0.0)) throw ContractViolation("oed: c entries must be nonnegative");
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < d; ++j)
      if (!(dp.r(i, j) >= 0.0 && dp.r(i, j) <= 1.0))
        throw ContractViolation("oed: reduction coefficients must lie in [0, 1]");
  for (int j = 0; j < d; ++j)
    if (!(dp.kappa(j) > 0.0)) throw ContractViolation("oed: costs must be positive");
  if (!(dp.budget >= 0.0)) throw ContractViolation("oed: budget must be nonnegative");
}

void check_w(const DesignProblem& dp, const std::vector<int>& w) {
  if (static_cast<int>(w.size()) != dp.kappa.size())
    throw ContractViolation("oed: selection vector length mismatch");
  for (int v : w)
    if (v != 0 && v != 1) throw ContractViolation("oed: selection vector must be binary");
}

double objective_from_load(const DesignProblem& dp, const VectorXd& load) {
  // load_i = sum_j w_j r_ij accumulated in index order
  double obj = 0.0;
  for (int i = 0; i < dp.c.size(); ++i) {
    const double b = std::max(0.0, 1.0 - load(i));
    obj += dp.c(i) * dp.c(i) * b * b;
  }
  return obj;
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

DesignVector greedy_design(const DesignProblem& dp) {
  const int d = static_cast<int>(dp.kappa.size());
  std::vector<int> w(d, 0);
  VectorXd load = VectorXd::Zero(dp.c.size());
  double cost = 0.0;
  double obj = objective_from_load(dp, load);
  while (true) {
    int best = -1;
    double best_gain = 0.0;
    for (int j = 0; j < d; ++j) {
      if (w[j] || cost + dp.kappa(j) > dp.budget) continue;
      const double cand = objective_from_load(dp, (load + dp.r.col(j)).eval());
      const double gain = (obj - cand) / dp.kappa(j);
      if (gain > best_gain + 1e-15 || (best < 0 && gain > 0.0)) {
        best = j;
        best_gain = gain;
      }
    }
    if (best < 0) break;
    w[best] = 1;
    cost += dp.kappa(best);
    load += dp.r.col(best);
    obj = objective_from_load(dp, load);
  }
  DesignVector out;
  out.w = w;
  // recompute through the canonical path so ties elsewhere compare identically
  out.objective = design_objective(dp, w);
  out.b = info_diagonal(dp.r, w);
  out.certified = false;
  out.method = "greedy";
  return out;
}

DesignVector enumerate_design(const DesignProblem& dp) {
  const int d = static_cast<int>(dp.kappa.size());
  std::vector<int> w(d, 0), best_w(d, 0);
  VectorXd load = VectorXd::Zero(dp.c.size());
  double best_obj = objective_from_load(dp, load);

  // lexicographic DFS: branch 0 before 1, replace only on strict improvement
  std::function<void(int, double)> visit = [&](int idx, double cost) {
    if (idx == d) {
      const double obj = objective_from_load(dp, load);
      if (obj < best_obj) {
        best_obj = obj;
        best_w = w;
      }
      return;
    }
    w[idx] = 0;
    visit(idx + 1, cost);
    if (cost + dp.kappa(idx) <= dp.budget) {
      w[idx] = 1;
      load += dp.r.col(idx);
      visit(idx + 1, cost + dp.kappa(idx));
      load -= dp.r.col(idx);
      w[idx] = 0;
    }
  };
  visit(0, 0.0);

  DesignVector out;
  out.w = best_w;
  out.objective = design_objective(dp, best_w);
  out.b = info_diagonal(dp.r, best_w);
  out.certified = true;
  out.method = "enumeration";
  return out;
}

// ---- branch and bound ----

struct BnbNode {
  double lower_bound = 0.0;
  std::uint64_t id = 0;
  std::vector<int> fixed;  // -1 free, 0/1 pinned
};

struct NodeOrder {
  bool operator()(const BnbNode& a, const BnbNode& b) const {
    if (a.lower_bound != b.lower_bound) return a.lower_bound > b.lower_bound;
    return a.id > b.id;  // FIFO among equal bounds keeps the search deterministic
  }
};

// projection onto {0 <= w <= 1 (free coords), kappa'w <= slack} by bisection
// on the budget multiplier
void project_knapsack(VectorXd& w, const std::vector<int>& fixed, const VectorXd& kappa,
                      double slack) {
  const int d = static_cast<int>(w.size());
  auto clamped = [&](double lambda, VectorXd& out) {
    double cost = 0.0;
    for (int j = 0; j < d; ++j) {
      if (fixed[j] >= 0) {
        out(j) = fixed[j];
        continue;
      }
      out(j) = std::clamp(w(j) - lambda * kappa(j), 0.0, 1.0);
      cost += kappa(j) * out(j);
    }
    return cost;
  };
  VectorXd out(d);
  if (clamped(0.0, out) <= slack + 1e-12) {
    w = out;
    return;
  }
  double lo = 0.0, hi = 1.0;
  while (clamped(hi, out) > slack) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (clamped(mid, out) > slack ? lo : hi) = mid;
  }
  clamped(hi, out);
  w = out;
}

double relax_lower_bound(const DesignProblem& dp, const std::vector<int>& fixed,
                         VectorXd& w_relaxed) {
  const int d = static_cast<int>(dp.kappa.size());
  const int q = static_cast<int>(dp.c.size());

  const double slack = dp.budget;  // projection accounts for pinned coordinates via fixed[]

  auto value_grad = [&](const VectorXd& w, VectorXd* grad) {
    double val = 0.0;
    if (grad) grad->setZero();
    for (int i = 0; i < q; ++i) {
      const double margin = 1.0 - w.dot(dp.r.row(i).transpose());
      if (margin > 0.0) {
        const double ci2 = dp.c(i) * dp.c(i);
        val += ci2 * margin * margin;
        if (grad) *grad -= (2.0 * ci2 * margin) * dp.r.row(i).transpose();
      }
    }
    return val;
  };

  // Lipschitz bound for the gradient
  double lip = 0.0;
  for (int i = 0; i < q; ++i) lip += dp.c(i) * dp.c(i) * dp.r.row(i).squaredNorm();
  lip = std::max(2.0 * lip, 1e-12);

  VectorXd w = VectorXd::Zero(d);
  project_knapsack(w, fixed, dp.kappa, slack);
  VectorXd grad(d);
  double val = value_grad(w, &grad);
  for (int it = 0; it < 200; ++it) {
    VectorXd w_next = w - grad / lip;
    project_knapsack(w_next, fixed, dp.kappa, slack);
    const double val_next = value_grad(w_next, nullptr);
    if ((w_next - w).lpNorm<Eigen::Infinity>() <= 1e-10) {
      w = w_next;
      val = val_next;
      break;
    }
    w = w_next;
    val = value_grad(w, &grad);
  }
  value_grad(w, &grad);
  w_relaxed = w;

  // first-order (convexity) certificate: val + min over the node polytope of
  // grad'(v - w), the linear program being a fractional knapsack
  std::vector<int> order;
  for (int j = 0; j < d; ++j)
    if (fixed[j] < 0) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = grad(a) / dp.kappa(a), rb = grad(b) / dp.kappa(b);
    if (ra != rb) return ra < rb;
    return a < b;
  });
  double budget_left = dp.budget;
  for (int j = 0; j < d; ++j)
    if (fixed[j] == 1) budget_left -= dp.kappa(j);
  double lp = 0.0;
  for (int j : order) {
    if (grad(j) >= 0.0) break;
    const double take = std::min(1.0, budget_left / dp.kappa(j));
    if (take <= 0.0) break;
    lp += grad(j) * take;
    budget_left -= dp.kappa(j) * take;
  }
  // pinned coordinates contribute grad'(v_j - w_j) = 0 since v_j = w_j there
  double gw = 0.0;
  for (int j = 0; j < d; ++j)
    if (fixed[j] < 0) gw += grad(j) * w(j);
  return std::max(0.0, val + lp - gw);
}

DesignVector branch_and_bound(const DesignProblem& dp) {
  const int d = static_cast<int>(dp.kappa.size());

  DesignVector incumbent = greedy_design(dp);
  incumbent.method = "branch_and_bound";

  std::priority_queue<BnbNode, std::vector<BnbNode>, NodeOrder> queue;
  std::uint64_t next_id = 0;

  BnbNode root;
  root.fixed.assign(d, -1);
  VectorXd w_rel;
  root.lower_bound = relax_lower_bound(dp, root.fixed, w_rel);
  root.id = next_id++;
  queue.push(root);

  std::uint64_t pops = 0;
  while (!queue.empty()) {
    const BnbNode node = queue.top();
    queue.pop();
    if (++pops > 5'000'000)
      throw SolveError("solve_design: branch-and-bound node budget exhausted");
    if (node.lower_bound > incumbent.objective) continue;

    VectorXd w_node;
    const double lb = relax_lower_bound(dp, node.fixed, w_node);
    if (lb > incumbent.objective) continue;

    // candidate integer point: round the relaxation, keep it feasible
    {
      std::vector<int> w_int(d, 0);
      double cost = 0.0;
      for (int j = 0; j < d; ++j) {
        const int v = node.fixed[j] >= 0 ? node.fixed[j] : (w_node(j) >= 0.5 ? 1 : 0);
        if (v == 1 && cost + dp.kappa(j) <= dp.budget) {
          w_int[j] = 1;
          cost += dp.kappa(j);
        }
      }
      const double obj = design_objective(dp, w_int);
      if (obj < incumbent.objective ||
          (obj == incumbent.objective && lex_less(w_int, incumbent.w))) {
        incumbent.w = w_int;
        incumbent.objective = obj;
      }
    }

    // branch on the most fractional free coordinate
    int branch = -1;
    double frac_dist = -1.0;
    for (int j = 0; j < d; ++j) {
      if (node.fixed[j] >= 0) continue;
      const double f = std::min(w_node(j), 1.0 - w_node(j));
      if (f > frac_dist + 1e-15) {
        frac_dist = f;
        branch = j;
      }
    }
    if (branch < 0) continue;  // fully pinned

    double pinned_cost = 0.0;
    for (int j = 0; j < d; ++j)
      if (node.fixed[j] == 1) pinned_cost += dp.kappa(j);

    for (int v : {0, 1}) {
      if (v == 1 && pinned_cost + dp.kappa(branch) > dp.budget) continue;
      BnbNode child;
      child.fixed = node.fixed;
      child.fixed[branch] = v;
      VectorXd w_child;
      child.lower_bound = relax_lower_bound(dp, child.fixed, w_child);
      child.id = next_id++;
      if (child.lower_bound <= incumbent.objective) queue.push(child);
    }
  }

  incumbent.b = info_diagonal(dp.r, incumbent.w);
  incumbent.certified = true;
  incumbent.method = "branch_and_bound";
  return incumbent;
}

}  // namespace

MatrixXd reduction_matrix(const MatrixXd& dist2, const VectorXd& gamma, GammaIndexing indexing,
                          const VectorXd& eps) {
  const int q = static_cast<int>(dist2.rows());
  const int d = static_cast<int>(dist2.cols());
  if (indexing == GammaIndexing::PerExperiment && gamma.size() != d)
    throw ContractViolation("reduction_matrix: need one gamma per experiment");
  if (indexing == GammaIndexing::PerCoordinate && gamma.size() != q)
    throw ContractViolation("reduction_matrix: need one gamma per coordinate");
  if (eps.size() != d) throw ContractViolation("reduction_matrix: need one eps per experiment");
  for (int i = 0; i < gamma.size(); ++i)
    if (!(gamma(i) > 0.0)) throw ContractViolation("reduction_matrix: gamma must be positive");
  for (int j = 0; j < d; ++j)
    if (!(eps(j) >= 0.0)) throw ContractViolation("reduction_matrix: eps must be nonnegative");

  MatrixXd r(q, d);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < d; ++j) {
      const double g = indexing == GammaIndexing::PerExperiment ? gamma(j) : gamma(i);
      const double val = std::exp(-g * g * dist2(i, j)) - eps(j);
      r(i, j) = std::clamp(val, 0.0, 1.0);
    }
  }
  return r;
}

VectorXd info_diagonal(const MatrixXd& r, const std::vector<int>& w) {
  if (static_cast<int>(w.size()) != r.cols())
    throw ContractViolation("info_diagonal: selection length mismatch");
  VectorXd b(r.rows());
  for (int i = 0; i < r.rows(); ++i) {
    double load = 0.0;
    for (int j = 0; j < r.cols(); ++j)
      if (w[j]) load += r(i, j);
    b(i) = std::max(0.0, 1.0 - load);
  }
  return b;
}

double design_objective(const DesignProblem& dp, const std::vector<int>& w) {
  validate(dp);
  check_w(dp, w);
  const VectorXd b = info_diagonal(dp.r, w);
  double obj = 0.0;
  for (int i = 0; i < dp.c.size(); ++i) obj += dp.c(i) * dp.c(i) * b(i) * b(i);
  return obj;
}

VectorXd optimal_slacks(const DesignProblem& dp, const std::vector<int>& w) {
  check_w(dp, w);
  return info_diagonal(dp.r, w);  // s_i = (1 - w'r_i)_+ elementwise
}

double slack_objective(const DesignProblem& dp, const VectorXd& slacks) {
  if (slacks.size() != dp.c.size()) throw ContractViolation("slack_objective: length mismatch");
  double obj = 0.0;
  for (int i = 0; i < dp.c.size(); ++i) obj += dp.c(i) * dp.c(i) * slacks(i) * slacks(i);
  return obj;
}

double feasible_support_count(const DesignProblem& dp) {
  const int d = static_cast<int>(dp.kappa.size());
  const double kappa_min = dp.kappa.minCoeff();
  const int kmax = std::min(d, static_cast<int>(std::floor(dp.budget / kappa_min)));
  double count = 0.0, binom = 1.0;  // C(d, 0)
  for (int k = 0; k <= kmax; ++k) {
    count += binom;
    if (count > 1e18) return 1e18;
    binom = binom * (d - k) / (k + 1.0);
  }
  return count;
}

DesignVector solve_design(const DesignProblem& dp, const DesignSolveOptions& opts) {
  validate(dp);
  const double count = feasible_support_count(dp);

  DesignSolveOptions::Method method = opts.method;
  if (method == DesignSolveOptions::Method::Auto) {
    if (count <= opts.enumeration_limit)
      method = DesignSolveOptions::Method::Enumerate;
    else if (count <= opts.bnb_limit)
      method = DesignSolveOptions::Method::BranchAndBound;
    else if (opts.allow_greedy)
      method = DesignSolveOptions::Method::Greedy;
    else
      throw CapacityError("solve_design: " + std::to_string(count) +
                          " feasible supports exceed the certified scale "
                          "and the greedy fallback is disabled");
  }

  DesignVector result;
  switch (method) {
    case DesignSolveOptions::Method::Enumerate:
      result = enumerate_design(dp);
      break;
    case DesignSolveOptions::Method::BranchAndBound:
      result = branch_and_bound(dp);
      break;
    case DesignSolveOptions::Method::Greedy:
      result = greedy_design(dp);
      break;
    case DesignSolveOptions::Method::Auto:
      break;  // unreachable
  }

  // slack-form verification: optimal slacks reproduce the objective exactly
  const double via_slacks = slack_objective(dp, optimal_slacks(dp, result.w));
  if (via_slacks != result.objective)
    throw SolveError("solve_design: slack-form objective mismatch");

  double cost = 0.0;
  for (int j = 0; j < dp.kappa.size(); ++j)
    if (result.w[j]) cost += dp.kappa(j);
  if (cost > dp.budget)
    throw SolveError("solve_design: produced an infeasible design");
  return result;
}

}  // namespace sdoed
