#include "gstz/wpmpc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gstz/qp.hpp"

namespace gstz {

WaypointPath extract_waypoints(const SpatioTemporalCostmap& costmap,
                               const VehicleState& anchor,
                               const WpmpcConfig& cfg) {
  WaypointPath path;
  const GridSpec& spec = costmap.spec;
  const int n = spec.cells();
  std::vector<double> scratch(n);
  std::vector<char> in_set(n), in_region(n);
  std::vector<int> queue(n);
  for (int t = 0; t < costmap.horizon; ++t) {
    const auto map = costmap.maps.channel(t);
    const auto [mn_it, mx_it] = std::minmax_element(map.begin(), map.end());
    if (*mx_it - *mn_it < cfg.flat_grid_range) break;  // degenerate grid

    std::copy(map.begin(), map.end(), scratch.begin());
    const int k = static_cast<int>(cfg.low_cost_quantile * (n - 1));
    std::nth_element(scratch.begin(), scratch.begin() + k, scratch.end());
    const double threshold = scratch[k];

    // The low-cost set can split into several regions; the waypoint is the
    // cost-weighted centroid of the region holding the global minimum.
    std::fill(in_set.begin(), in_set.end(), 0);
    for (int i = 0; i < n; ++i) in_set[i] = map[i] <= threshold;
    std::fill(in_region.begin(), in_region.end(), 0);
    int head = 0, tail = 0;
    const int seed = static_cast<int>(mn_it - map.begin());
    queue[tail++] = seed;
    in_region[seed] = 1;
    while (head < tail) {
      const int cur = queue[head++];
      const int r = cur / spec.width, c = cur % spec.width;
      const int neighbors[4] = {
          r > 0 ? cur - spec.width : -1,
          r + 1 < spec.height ? cur + spec.width : -1,
          c > 0 ? cur - 1 : -1,
          c + 1 < spec.width ? cur + 1 : -1,
      };
      for (int nb : neighbors) {
        if (nb >= 0 && in_set[nb] && !in_region[nb]) {
          in_region[nb] = 1;
          queue[tail++] = nb;
        }
      }
    }

    double wsum = 0.0, rsum = 0.0, csum = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!in_region[i]) continue;
      const double w = 1.0 - map[i];
      wsum += w;
      rsum += w * (i / spec.width);
      csum += w * (i % spec.width);
    }
    if (wsum <= 0.0) break;
    double wx, wy;
    cell_to_world(rsum / wsum, csum / wsum, anchor, spec, wx, wy);
    path.points.push_back({wx, wy});
  }
  path.valid_len = static_cast<int>(path.points.size());
  return path;
}

WaypointPath check_feasibility(const WaypointPath& path,
                               const VehicleState& s0, double dt,
                               const VehicleParams& params,
                               const WpmpcConfig& cfg) {
  WaypointPath out = path;
  const double max_step = cfg.v_max * dt + 1e-9;  // closed bound
  const double beta_max = slip_angle(params.u_max.steer, params);
  // Direction estimates below the quantization scale are noise.
  const double dir_min_dist = 0.25;

  double px = s0.x, py = s0.y;
  bool have_dir = s0.v > 0.1;
  double dir = s0.psi + s0.beta;

  int k = 0;
  for (; k < static_cast<int>(path.points.size()); ++k) {
    const Waypoint& p = path.points[k];
    const double dx = p.x - px, dy = p.y - py;
    const double dist = std::hypot(dx, dy);
    if (dist > max_step) break;
    if (have_dir && dist > dir_min_dist) {
      // One-step over-approximation of the velocity-direction change: full
      // slip swing plus the yaw increment at this spacing, plus a centroid
      // jitter allowance that decays with distance.
      const double theta_max = 2.0 * beta_max +
                               dist / params.l_r * std::sin(beta_max) +
                               std::atan2(0.4, dist);
      const double turn = std::abs(wrap_angle(std::atan2(dy, dx) - dir));
      if (turn > theta_max) break;
    }
    if (dist > dir_min_dist) {
      dir = std::atan2(dy, dx);
      have_dir = true;
    }
    px = p.x;
    py = p.y;
  }
  out.valid_len = k;
  return out;
}

TrajectoryPlan braking_plan(const VehicleState& s0, const Control& prev_ctrl,
                            double dt, int horizon,
                            const VehicleParams& params) {
  TrajectoryPlan plan;
  plan.controls.resize(horizon);
  Control prev = prev_ctrl;
  for (int t = 0; t < horizon; ++t) {
    prev = clamp_control_rate({params.u_min.accel, 0.0}, prev, params);
    plan.controls[t] = prev;
  }
  plan.states = rollout(s0, plan.controls, dt, params);
  plan.cost = 0.0;
  plan.executed_len = horizon;
  return plan;
}

namespace {

// Jacobians of one bicycle step w.r.t. (x, y, psi, v) and (a, delta).
void step_jacobians(const VehicleState& s, const Control& u, double dt,
                    const VehicleParams& p, Eigen::Matrix4d& A,
                    Eigen::Matrix<double, 4, 2>& B) {
  const double ratio = p.l_r / (p.l_f + p.l_r);
  const double tan_d = std::tan(u.steer);
  const double beta = std::atan(ratio * tan_d);
  const double cos_d = std::cos(u.steer);
  const double dbeta =
      ratio / (cos_d * cos_d) / (1.0 + ratio * ratio * tan_d * tan_d);
  const double h = s.psi + beta;
  const double ch = std::cos(h), sh = std::sin(h);

  A.setIdentity();
  A(0, 2) = -s.v * sh * dt;
  A(0, 3) = ch * dt;
  A(1, 2) = s.v * ch * dt;
  A(1, 3) = sh * dt;
  A(2, 3) = std::sin(beta) / p.l_r * dt;

  B.setZero();
  B(0, 1) = -s.v * sh * dbeta * dt;
  B(1, 1) = s.v * ch * dbeta * dt;
  B(2, 1) = s.v / p.l_r * std::cos(beta) * dbeta * dt;
  B(3, 0) = dt;
}

}  // namespace

TrajectoryPlan qp_track(const WaypointPath& path, const VehicleState& s0,
                        double dt, const VehicleParams& params,
                        const Control& prev_ctrl, const WpmpcConfig& cfg) {
  const int N = std::min(path.valid_len, static_cast<int>(path.points.size()));
  if (N < 1) return braking_plan(s0, prev_ctrl, dt, 1, params);
  const int nu = 2 * N;

  // Rate-feasible nominal decaying toward zero control.
  std::vector<Control> u(N);
  {
    Control prev = prev_ctrl;
    for (int t = 0; t < N; ++t) {
      prev = clamp_control_rate({0.0, 0.0}, prev, params);
      u[t] = prev;
    }
  }

  for (int pass = 0; pass < cfg.linearization_passes; ++pass) {
    const std::vector<VehicleState> nominal = rollout(s0, u, dt, params);

    // Position sensitivity of every state to every control via the chain of
    // linearized steps.
    Eigen::MatrixXd M(nu, nu);
    M.setZero();
    Eigen::VectorXd resid(nu);
    Eigen::MatrixXd Jstate(4, nu);
    Jstate.setZero();
    VehicleState s = s0;
    for (int t = 0; t < N; ++t) {
      Eigen::Matrix4d A;
      Eigen::Matrix<double, 4, 2> B;
      step_jacobians(s, u[t], dt, params, A, B);
      Jstate = (A * Jstate).eval();
      Jstate.block<4, 2>(0, 2 * t) += B;
      M.row(2 * t) = Jstate.row(0);
      M.row(2 * t + 1) = Jstate.row(1);
      resid(2 * t) = nominal[t].x - path.points[t].x;
      resid(2 * t + 1) = nominal[t].y - path.points[t].y;
      s = nominal[t];
    }

    Eigen::VectorXd w = Eigen::VectorXd::Ones(N);
    if (!cfg.squared_objective) {
      // IRLS step toward the plain 2-norm objective.
      for (int t = 0; t < N; ++t) {
        const double e = std::hypot(resid(2 * t), resid(2 * t + 1));
        w(t) = 1.0 / std::max(e, 0.05);
      }
    }
    Eigen::MatrixXd WM(nu, nu);
    for (int t = 0; t < N; ++t) {
      WM.row(2 * t) = w(t) * M.row(2 * t);
      WM.row(2 * t + 1) = w(t) * M.row(2 * t + 1);
    }

    QpProblem qp;
    const double scale = 2.0 / N;
    qp.H = scale * M.transpose() * WM;
    qp.H.diagonal().array() += 1e-6;
    qp.g = scale * (WM.transpose() * resid);

    // Box and rate constraints on the absolute controls.
    const int mrows = 2 * nu + 4 * N;
    qp.C = Eigen::MatrixXd::Zero(mrows, nu);
    qp.d = Eigen::VectorXd::Zero(mrows);
    int row = 0;
    auto bounds_of = [&](int t, int c) {
      const double lo = c == 0 ? params.u_min.accel : params.u_min.steer;
      const double hi = c == 0 ? params.u_max.accel : params.u_max.steer;
      const double cur = c == 0 ? u[t].accel : u[t].steer;
      return std::pair{lo - cur, hi - cur};
    };
    for (int t = 0; t < N; ++t) {
      for (int c = 0; c < 2; ++c) {
        const auto [lo, hi] = bounds_of(t, c);
        qp.C(row, 2 * t + c) = 1.0;
        qp.d(row++) = hi;
        qp.C(row, 2 * t + c) = -1.0;
        qp.d(row++) = -lo;
      }
    }
    for (int t = 0; t < N; ++t) {
      for (int c = 0; c < 2; ++c) {
        const double rlo = c == 0 ? params.du_min.accel : params.du_min.steer;
        const double rhi = c == 0 ? params.du_max.accel : params.du_max.steer;
        const double prev = t == 0 ? (c == 0 ? prev_ctrl.accel : prev_ctrl.steer)
                                   : (c == 0 ? u[t - 1].accel : u[t - 1].steer);
        const double cur = c == 0 ? u[t].accel : u[t].steer;
        qp.C(row, 2 * t + c) = 1.0;
        if (t > 0) qp.C(row, 2 * (t - 1) + c) = -1.0;
        qp.d(row++) = rhi - (cur - prev);
        qp.C(row, 2 * t + c) = -1.0;
        if (t > 0) qp.C(row, 2 * (t - 1) + c) = 1.0;
        qp.d(row++) = (cur - prev) - rlo;
      }
    }

    const QpResult sol =
        solve_qp_active_set(qp, Eigen::VectorXd::Zero(nu));
    if (!sol.converged) {
      std::fprintf(stderr, "qp_track: QP did not converge, braking\n");
      return braking_plan(s0, prev_ctrl, dt, N, params);
    }
    for (int t = 0; t < N; ++t) {
      u[t].accel += sol.x(2 * t);
      u[t].steer += sol.x(2 * t + 1);
      u[t] = clamp_control(u[t], params);  // shave active-set tolerance dust
    }
  }

  TrajectoryPlan plan;
  plan.controls = u;
  plan.states = rollout(s0, u, dt, params);
  double err = 0.0;
  for (int t = 0; t < N; ++t) {
    err += std::hypot(plan.states[t].x - path.points[t].x,
                      plan.states[t].y - path.points[t].y);
  }
  plan.cost = err / N;
  plan.executed_len = N;
  return plan;
}

TrajectoryPlan WpmpcController::plan(const VehicleState& s,
                                     const SpatioTemporalCostmap& costmap,
                                     const VehicleState& anchor,
                                     const Control& prev_ctrl) {
  last_path_ = extract_waypoints(costmap, anchor, cfg_);
  if (last_path_.points.empty()) {
    return braking_plan(s, prev_ctrl, cfg_.dt, horizon_, params_);
  }
  last_path_ = check_feasibility(last_path_, s, cfg_.dt, params_, cfg_);
  if (last_path_.valid_len < 1) {
    return braking_plan(s, prev_ctrl, cfg_.dt, horizon_, params_);
  }
  return qp_track(last_path_, s, cfg_.dt, params_, prev_ctrl, cfg_);
}

}  // namespace gstz
