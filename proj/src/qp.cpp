#include "sdoed/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <cstdlib>
#include <fstream>

#include "sdoed/errors.hpp"

namespace sdoed {

// Primal active-set method on the elastic form
//   min 0.5 d'Hd + g'd + penalty * sum(s) + 0.5 reg * sum(s^2)
//   s.t. Ae d = be,  Ai d - s <= bi,  s >= 0.
//
// Working-set state per inequality row: `pinned` holds s_i = 0, `coupled`
// holds Ai d - s_i = bi. Pinned slacks are eliminated from the equality-
// constrained subproblems instead of being carried as constraint rows, so
// the Schur complement contains only the equalities and the active coupled
// rows. Each subproblem solves, with u0 = -H^{-1} g and multipliers lam over
// (equalities; coupled rows),
//   [A H^{-1} A' + D] lam = A u0 - rhs,    d+ = u0 - H^{-1} A' lam,
// where D adds 1/reg on coupled rows whose slack is free, and free slacks
// move to s+ = (lam - penalty)/reg (or the unconstrained -penalty/reg when
// their row is inactive, to be caught by the positivity ratio test).
QpResult solve_qp(const QpProblem& p, const QpOptions& opts) {
  const int nd = static_cast<int>(p.H.rows());
  const int ne = static_cast<int>(p.Ae.rows());
  const int ni = static_cast<int>(p.Ai.rows());
  if (p.g.size() != nd || p.H.cols() != nd) throw ContractViolation("solve_qp: H/g shape mismatch");
  if (ne > 0 && p.Ae.cols() != nd) throw ContractViolation("solve_qp: Ae shape mismatch");
  if (ni > 0 && p.Ai.cols() != nd) throw ContractViolation("solve_qp: Ai shape mismatch");

  Eigen::LLT<MatrixXd> hllt(p.H);
  if (hllt.info() != Eigen::Success) throw SolveError("solve_qp: Hessian not positive definite");
  const double reg = opts.slack_reg;
  const double penalty = opts.penalty;

  MatrixXd hinv_eq;  // H^{-1} Ae'
  if (ne > 0) hinv_eq = hllt.solve(p.Ae.transpose());
  std::unordered_map<int, VectorXd> hinv_ai;
  auto hinv_row = [&](int i) -> const VectorXd& {
    auto it = hinv_ai.find(i);
    if (it != hinv_ai.end()) return it->second;
    return hinv_ai.emplace(i, hllt.solve(p.Ai.row(i).transpose())).first->second;
  };
  const VectorXd u0 = -hllt.solve(p.g);

  // start point: least squares on the equalities, slacks absorb violations
  VectorXd d = VectorXd::Zero(nd);
  if (ne > 0) {
    d = p.Ae.colPivHouseholderQr().solve(p.be);
    const double resid = (p.Ae * d - p.be).lpNorm<Eigen::Infinity>();
    if (resid > 1e-7 * std::max(1.0, p.be.lpNorm<Eigen::Infinity>()))
      throw SolveError("solve_qp: equality constraints inconsistent (residual " +
                       std::to_string(resid) + ")");
  }
  VectorXd s = VectorXd::Zero(ni);
  std::vector<char> pinned(ni, 1);
  std::vector<char> coupled(ni, 0);
  if (ni > 0) {
    const VectorXd viol = p.Ai * d - p.bi;
    for (int i = 0; i < ni; ++i) {
      if (viol(i) > 0.0) {
        s(i) = viol(i);
        pinned[i] = 0;
        coupled[i] = 1;  // tight by construction
      }
    }
  }
  for (int code : opts.warm_working) {
    if (code >= 0 && code < ni && !coupled[code]) {
      const double gap = p.bi(code) - p.Ai.row(code).dot(d) + s(code);
      if (std::abs(gap) <= 1e-9 * std::max(1.0, std::abs(p.bi(code)))) coupled[code] = 1;
    }
  }

  const int max_iter = opts.max_iterations > 0 ? opts.max_iterations : 300 + 40 * (ni + ne);
  int iter = 0;
  VectorXd lam_eq = VectorXd::Zero(ne);
  VectorXd lam_coupled = VectorXd::Zero(ni);

  for (; iter < max_iter; ++iter) {
    std::vector<int> wc;
    for (int i = 0; i < ni; ++i)
      if (coupled[i]) wc.push_back(i);
    const int nc = static_cast<int>(wc.size());
    const int na = ne + nc;

    VectorXd lam = VectorXd::Zero(na);
    VectorXd d_next = u0;
    if (na > 0) {
      MatrixXd smat(na, na);
      VectorXd rhs(na);
      for (int a = 0; a < ne; ++a) {
        rhs(a) = p.Ae.row(a).dot(u0) - p.be(a);
        for (int b = 0; b <= a; ++b)
          smat(a, b) = smat(b, a) = p.Ae.row(a) * hinv_eq.col(b);
      }
      for (int ci = 0; ci < nc; ++ci) {
        const int i = wc[ci];
        const int a = ne + ci;
        const VectorXd& hri = hinv_row(i);
        for (int b = 0; b < ne; ++b) smat(a, b) = smat(b, a) = p.Ae.row(b).dot(hri);
        for (int cj = 0; cj <= ci; ++cj) {
          double v = p.Ai.row(wc[cj]).dot(hri);
          if (ci == cj && !pinned[i]) v += 1.0 / reg;
          smat(a, ne + cj) = smat(ne + cj, a) = v;
        }
        rhs(a) = p.Ai.row(i).dot(u0) - p.bi(i);
        if (!pinned[i]) rhs(a) += penalty / reg;
      }

      Eigen::FullPivLU<MatrixXd> lu(smat);
      lu.setThreshold(1e-12);
      if (!lu.isInvertible()) {
        if (!wc.empty()) {
          coupled[wc.back()] = 0;  // drop the newest coupled row and retry
          continue;
        }
        throw SolveError("solve_qp: singular equality system");
      }
      lam = lu.solve(rhs);

      for (int a = 0; a < ne; ++a) d_next -= lam(a) * hinv_eq.col(a);
      for (int ci = 0; ci < nc; ++ci) d_next -= lam(ne + ci) * hinv_row(wc[ci]);
    }

    VectorXd s_next = VectorXd::Zero(ni);
    for (int i = 0; i < ni; ++i) {
      if (pinned[i]) continue;
      if (coupled[i]) {
        const int ci = static_cast<int>(std::find(wc.begin(), wc.end(), i) - wc.begin());
        s_next(i) = (lam(ne + ci) - penalty) / reg;
      } else {
        s_next(i) = -penalty / reg;  // blocked by positivity below
      }
    }

    const VectorXd step_d = d_next - d;
    VectorXd step_s(ni);
    for (int i = 0; i < ni; ++i) step_s(i) = pinned[i] ? 0.0 : s_next(i) - s(i);

    const double cur_scale = std::max(1.0, std::max(d.lpNorm<Eigen::Infinity>(),
                                                    ni ? s.lpNorm<Eigen::Infinity>() : 0.0));
    const double step_norm = std::max(step_d.lpNorm<Eigen::Infinity>(),
                                      ni ? step_s.lpNorm<Eigen::Infinity>() : 0.0);
    if (step_norm <= opts.tol * cur_scale) {
      // stationary on the working set: check multiplier signs
      lam_coupled.setZero();
      int drop_coupled = -1, drop_pinned = -1;
      double most_negative = -1e-10;
      for (int ci = 0; ci < nc; ++ci) {
        const double mult = lam(ne + ci);
        lam_coupled(wc[ci]) = mult;
        if (mult < most_negative) {
          most_negative = mult;
          drop_coupled = wc[ci];
          drop_pinned = -1;
        }
      }
      for (int i = 0; i < ni; ++i) {
        if (!pinned[i]) continue;
        const double mu_p = penalty - (coupled[i] ? lam_coupled(i) : 0.0);
        if (mu_p < most_negative) {
          most_negative = mu_p;
          drop_pinned = i;
          drop_coupled = -1;
        }
      }
      if (drop_coupled < 0 && drop_pinned < 0) {
        lam_eq = na > 0 ? VectorXd(lam.head(ne)) : VectorXd::Zero(ne);
        break;  // optimal
      }
      if (drop_coupled >= 0) coupled[drop_coupled] = 0;
      if (drop_pinned >= 0) pinned[drop_pinned] = 0;
      continue;
    }

    // ratio test over inactive coupled rows and positivity of free slacks
    double alpha = 1.0;
    int blocking_coupled = -1, blocking_pinned = -1;
    for (int i = 0; i < ni; ++i) {
      if (!coupled[i]) {
        const double delta = p.Ai.row(i).dot(step_d) - step_s(i);
        if (delta > 1e-13) {
          const double gap = p.bi(i) - (p.Ai.row(i).dot(d) - s(i));
          const double ratio = std::max(0.0, gap) / delta;
          if (ratio < alpha - 1e-15) {
            alpha = ratio;
            blocking_coupled = i;
            blocking_pinned = -1;
          }
        }
      }
      if (!pinned[i] && step_s(i) < -1e-13) {
        const double ratio = std::max(0.0, s(i)) / (-step_s(i));
        if (ratio < alpha - 1e-15) {
          alpha = ratio;
          blocking_pinned = i;
          blocking_coupled = -1;
        }
      }
    }

    d += alpha * step_d;
    for (int i = 0; i < ni; ++i)
      if (!pinned[i]) s(i) = std::max(0.0, s(i) + alpha * step_s(i));
    if (blocking_coupled >= 0) coupled[blocking_coupled] = 1;
    if (blocking_pinned >= 0) {
      pinned[blocking_pinned] = 1;
      s(blocking_pinned) = 0.0;
    }
  }
  if (iter >= max_iter) {
    if (const char* dump = std::getenv("SDOED_QP_DUMP")) {
      std::ofstream out(dump);
      out.precision(17);
      out << nd << " " << ne << " " << ni << "\n" << p.H << "\n" << p.g.transpose() << "\n";
      if (ne) out << p.Ae << "\n" << p.be.transpose() << "\n";
      if (ni) out << p.Ai << "\n" << p.bi.transpose() << "\n";
    }
    throw SolveError("solve_qp: active-set iteration limit reached (" + std::to_string(max_iter) +
                     ")");
  }

  QpResult out;
  out.d = d;
  out.slack = s;
  out.lambda_eq = lam_eq;
  out.lambda_in = VectorXd::Zero(ni);
  for (int i = 0; i < ni; ++i) {
    if (coupled[i]) {
      out.lambda_in(i) = std::max(0.0, lam_coupled(i));
      out.working.push_back(i);
    }
  }
  out.iterations = iter + 1;
  return out;
}

}  // namespace sdoed
