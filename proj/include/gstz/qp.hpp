#pragma once

#include <Eigen/Dense>

namespace gstz {

// min 1/2 x'Hx + g'x  subject to  C x <= d, with H positive definite.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
};

struct QpResult {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
};

// Dense primal active-set method. x0 must be feasible; the stacked-horizon
// problems here are small (tens of variables), so no factorization updates
// are attempted.
QpResult solve_qp_active_set(const QpProblem& p, const Eigen::VectorXd& x0,
                             int max_iterations = 0);

}  // namespace gstz
