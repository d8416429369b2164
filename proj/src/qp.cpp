#include "gstz/qp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace gstz {

namespace {
constexpr double kFeasTol = 1e-8;
constexpr double kStepTol = 1e-10;
}  // namespace

QpResult solve_qp_active_set(const QpProblem& p, const Eigen::VectorXd& x0,
                             int max_iterations) {
  const int n = static_cast<int>(p.H.rows());
  const int m = static_cast<int>(p.C.rows());
  if (max_iterations <= 0) max_iterations = 10 * (n + m) + 50;

  QpResult res;
  res.x = x0;

  // Reject an infeasible start instead of silently moving on.
  for (int i = 0; i < m; ++i) {
    if (p.C.row(i).dot(res.x) > p.d(i) + 1e-6) {
      return res;
    }
  }

  std::vector<int> active;
  std::vector<char> in_active(m, 0);

  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    const int na = static_cast<int>(active.size());
    // KKT system for the equality-constrained subproblem.
    Eigen::MatrixXd K(n + na, n + na);
    K.setZero();
    K.topLeftCorner(n, n) = p.H;
    for (int i = 0; i < na; ++i) {
      K.block(n + i, 0, 1, n) = p.C.row(active[i]);
      K.block(0, n + i, n, 1) = p.C.row(active[i]).transpose();
    }
    Eigen::VectorXd rhs(n + na);
    rhs.head(n) = -(p.H * res.x + p.g);
    rhs.tail(na).setZero();

    Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
    if (!sol.allFinite()) {
      sol = K.fullPivLu().solve(rhs);
      if (!sol.allFinite()) return res;
    }
    const Eigen::VectorXd step = sol.head(n);
    const Eigen::VectorXd lambda = sol.tail(na);

    if (step.lpNorm<Eigen::Infinity>() < kStepTol) {
      // Stationary on the working set; check multipliers.
      int worst = -1;
      double worst_val = -kFeasTol;
      for (int i = 0; i < na; ++i) {
        if (lambda(i) < worst_val) {
          worst_val = lambda(i);
          worst = i;
        }
      }
      if (worst < 0) {
        res.converged = true;
        return res;
      }
      in_active[active[worst]] = 0;
      active.erase(active.begin() + worst);
      continue;
    }

    // Line search to the nearest blocking constraint.
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < m; ++i) {
      if (in_active[i]) continue;
      const double ci_p = p.C.row(i).dot(step);
      if (ci_p <= kFeasTol) continue;
      const double slack = p.d(i) - p.C.row(i).dot(res.x);
      const double a = slack / ci_p;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    if (alpha > 0.0) res.x += alpha * step;
    if (blocking >= 0) {
      active.push_back(blocking);
      in_active[blocking] = 1;
    }
  }
  return res;  // iteration guard hit; caller treats as not converged
}

}  // namespace gstz
