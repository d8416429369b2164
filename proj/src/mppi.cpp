#include "gstz/mppi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gstz/parallel.hpp"
#include "gstz/rng.hpp"

namespace gstz {

double trajectory_cost(std::span<const VehicleState> states,
                       const SpatioTemporalCostmap& costmap,
                       const VehicleState& anchor, double terminal_weight) {
  const int T = static_cast<int>(states.size());
  auto map_cost = [&](const VehicleState& s, int t) {
    if (auto cell = world_to_cell(s.x, s.y, anchor, costmap.spec)) {
      return costmap.maps.at(t, cell->row, cell->col);
    }
    return 1.0;
  };
  double total = 0.0;
  for (int t = 0; t < T; ++t) total += map_cost(states[t], t);
  if (T > 0) total += terminal_weight * map_cost(states[T - 1], T - 1);
  return total;
}

std::vector<Control> shift_controls(std::span<const Control> u, int h) {
  if (u.empty()) return {};
  h = std::clamp(h, 0, static_cast<int>(u.size()));
  std::vector<Control> out(u.begin() + h, u.end());
  out.resize(u.size(), u.back());
  return out;
}

TrajectoryPlan solve(const VehicleState& s0,
                     const SpatioTemporalCostmap& costmap,
                     const VehicleState& anchor,
                     std::span<const Control> warm_start,
                     const MppiConfig& cfg, const VehicleParams& params) {
  const int T = cfg.horizon;
  const int K = cfg.samples;

  std::vector<Control> u(warm_start.begin(), warm_start.end());
  u.resize(T, Control{});
  for (Control& c : u) c = clamp_control(c, params);

  auto evaluate = [&](std::span<const Control> ctrls) {
    TrajectoryPlan p;
    p.controls.assign(ctrls.begin(), ctrls.end());
    p.states = rollout(s0, ctrls, cfg.dt, params);
    p.cost = trajectory_cost(p.states, costmap, anchor, cfg.terminal_weight);
    p.executed_len = T;
    return p;
  };

  TrajectoryPlan best = evaluate(u);

  const CounterRng rng(cfg.seed);
  std::vector<double> deltas(static_cast<size_t>(K) * T * 2);
  std::vector<double> costs(K);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    parallel_for(K, cfg.threads, [&](int i) {
      const uint64_t base =
          (static_cast<uint64_t>(iter) * K + i) * static_cast<uint64_t>(T) * 2;
      std::vector<Control> cand(T);
      double* d = deltas.data() + static_cast<size_t>(i) * T * 2;
      for (int t = 0; t < T; ++t) {
        Control c{u[t].accel + cfg.sigma_accel * rng.normal(base + 2 * t),
                  u[t].steer + cfg.sigma_steer * rng.normal(base + 2 * t + 1)};
        c = clamp_control(c, params);
        // Effective perturbation after clamping keeps the averaged update
        // inside the bounds.
        d[2 * t] = c.accel - u[t].accel;
        d[2 * t + 1] = c.steer - u[t].steer;
        cand[t] = c;
      }
      const auto states = rollout(s0, cand, cfg.dt, params);
      costs[i] = trajectory_cost(states, costmap, anchor, cfg.terminal_weight);
    });

    int argmin = 0;
    for (int i = 1; i < K; ++i) {
      if (costs[i] < costs[argmin]) argmin = i;
    }
    const double min_cost = costs[argmin];

    double wsum = 0.0;
    std::vector<double> w(K);
    for (int i = 0; i < K; ++i) {
      w[i] = std::exp(-(costs[i] - min_cost) / cfg.lambda);
      wsum += w[i];
    }

    auto controls_of_sample = [&](int i) {
      std::vector<Control> cand(T);
      const double* d = deltas.data() + static_cast<size_t>(i) * T * 2;
      for (int t = 0; t < T; ++t) {
        cand[t] = Control{u[t].accel + d[2 * t], u[t].steer + d[2 * t + 1]};
      }
      return cand;
    };

    if (!std::isfinite(wsum) || wsum <= std::numeric_limits<double>::min()) {
      // Degenerate weights: fall back to the elite sample.
      u = controls_of_sample(argmin);
    } else {
      if (min_cost < best.cost) {
        best = evaluate(controls_of_sample(argmin));
      }
      for (int t = 0; t < T; ++t) {
        double da = 0.0, ds = 0.0;
        for (int i = 0; i < K; ++i) {
          const double* d = deltas.data() + static_cast<size_t>(i) * T * 2;
          da += w[i] * d[2 * t];
          ds += w[i] * d[2 * t + 1];
        }
        u[t].accel += da / wsum;
        u[t].steer += ds / wsum;
        u[t] = clamp_control(u[t], params);
      }
    }

    const TrajectoryPlan iterate = evaluate(u);
    if (iterate.cost < best.cost) best = iterate;
  }
  return best;
}

TrajectoryPlan MppiController::plan(const VehicleState& s,
                                    const SpatioTemporalCostmap& costmap,
                                    const VehicleState& anchor) {
  MppiConfig cfg = cfg_;
  cfg.seed = derive_seed(cfg_.seed, cycle_++);
  const std::vector<Control> warm = pending_warm_start();
  TrajectoryPlan p = solve(s, costmap, anchor, warm, cfg, params_);
  prev_ = p.controls;
  return p;
}

std::vector<Control> MppiController::pending_warm_start() const {
  if (prev_.empty()) return std::vector<Control>(cfg_.horizon, Control{});
  return shift_controls(prev_, cfg_.execute_steps);
}

void MppiController::reset() {
  prev_.clear();
  cycle_ = 0;
}

}  // namespace gstz
