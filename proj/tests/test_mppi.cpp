#include "gstz/mppi.hpp"

#include <cmath>

#include "doctest.h"
#include "gstz/rng.hpp"

using namespace gstz;

namespace {

SpatioTemporalCostmap uniform_costmap(int horizon, double value,
                                      const GridSpec& spec = {}) {
  SpatioTemporalCostmap cm{spec, horizon,
                           ChannelStack(horizon, spec.height, spec.width)};
  for (double& v : cm.maps.data()) v = value;
  return cm;
}

// All-ones map with one zero-cost column at the given ego-frame offset.
SpatioTemporalCostmap corridor_costmap(int horizon, int col_offset,
                                       const GridSpec& spec = {}) {
  SpatioTemporalCostmap cm = uniform_costmap(horizon, 1.0, spec);
  for (int t = 0; t < horizon; ++t) {
    for (int r = 0; r < spec.height; ++r) {
      cm.maps.at(t, r, spec.center_col() + col_offset) = 0.0;
    }
  }
  return cm;
}

double exhaustive_constant_control_best(const VehicleState& s0,
                                        const SpatioTemporalCostmap& cm,
                                        const MppiConfig& cfg,
                                        const VehicleParams& p) {
  double best = std::numeric_limits<double>::infinity();
  for (int ia = 0; ia < 5; ++ia) {
    for (int is = 0; is < 5; ++is) {
      const Control u{p.u_min.accel + (p.u_max.accel - p.u_min.accel) * ia / 4.0,
                      p.u_min.steer + (p.u_max.steer - p.u_min.steer) * is / 4.0};
      const std::vector<Control> ctrls(cfg.horizon, u);
      const auto states = rollout(s0, ctrls, cfg.dt, p);
      best = std::min(best,
                      trajectory_cost(states, cm, s0, cfg.terminal_weight));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("trajectory_cost") {
  const GridSpec spec;
  const VehicleState anchor{};

  SUBCASE("zero-cost cells sum to zero") {
    const SpatioTemporalCostmap cm = uniform_costmap(30, 0.0);
    std::vector<VehicleState> states(30, anchor);
    CHECK(trajectory_cost(states, cm, anchor, 10.0) == 0.0);
  }

  SUBCASE("fully off-grid trajectory costs T + c_T") {
    const SpatioTemporalCostmap cm = uniform_costmap(30, 0.0);
    std::vector<VehicleState> states(30);
    for (auto& s : states) s.x = 500.0;
    CHECK(trajectory_cost(states, cm, anchor, 10.0) == doctest::Approx(40.0));
  }

  SUBCASE("matches an independent per-timestep loop") {
    GridSpec spec_small;
    spec_small.width = 40;
    spec_small.height = 16;
    SpatioTemporalCostmap cm{spec_small, 8,
                             ChannelStack(8, spec_small.height, spec_small.width)};
    const CounterRng rng(5);
    uint64_t k = 0;
    for (double& v : cm.maps.data()) v = rng.uniform(k++);

    std::vector<VehicleState> states(8);
    for (int t = 0; t < 8; ++t) {
      states[t].x = 0.7 * (t + 1);
      states[t].y = 0.4 * std::sin(t * 0.9);
    }
    const double c_T = 10.0;
    double expect = 0.0;
    for (int t = 0; t < 8; ++t) {
      const auto cell = world_to_cell(states[t].x, states[t].y, anchor, spec_small);
      expect += cell ? cm.maps.at(t, cell->row, cell->col) : 1.0;
    }
    const auto last = world_to_cell(states[7].x, states[7].y, anchor, spec_small);
    expect += c_T * (last ? cm.maps.at(7, last->row, last->col) : 1.0);
    CHECK(trajectory_cost(states, cm, anchor, c_T) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("shift_controls keeps the tail and pads with the last control") {
  std::vector<Control> u(5);
  for (int i = 0; i < 5; ++i) u[i] = Control{double(i), 0.1 * i};
  const auto shifted = shift_controls(u, 2);
  REQUIRE(shifted.size() == 5);
  CHECK(shifted[0].accel == 2.0);
  CHECK(shifted[2].accel == 4.0);
  CHECK(shifted[3].accel == 4.0);
  CHECK(shifted[4].accel == 4.0);
}

TEST_CASE("solve: uninformative costmap returns the warm start") {
  const VehicleParams p;
  VehicleState s0;
  s0.v = 4.0;
  MppiConfig cfg;
  cfg.horizon = 20;
  cfg.samples = 10000;
  cfg.iterations = 1;
  cfg.seed = 3;
  const SpatioTemporalCostmap cm = uniform_costmap(20, 0.0);
  std::vector<Control> warm(20, Control{0.4, 0.02});
  const TrajectoryPlan plan = solve(s0, cm, s0, warm, cfg, p);
  for (int t = 0; t < 20; ++t) {
    CHECK(std::abs(plan.controls[t].accel - 0.4) < 1e-9);
    CHECK(std::abs(plan.controls[t].steer - 0.02) < 1e-9);
  }
  CHECK(plan.cost == 0.0);
}

TEST_CASE("solve: zero noise degenerates to the warm start") {
  const VehicleParams p;
  VehicleState s0;
  s0.v = 5.0;
  MppiConfig cfg;
  cfg.horizon = 15;
  cfg.samples = 64;
  cfg.iterations = 3;
  cfg.sigma_accel = 0.0;
  cfg.sigma_steer = 0.0;
  const SpatioTemporalCostmap cm = corridor_costmap(15, 10);
  std::vector<Control> warm(15, Control{0.5, -0.05});
  const TrajectoryPlan plan = solve(s0, cm, s0, warm, cfg, p);
  for (int t = 0; t < 15; ++t) {
    CHECK(plan.controls[t].accel == 0.5);
    CHECK(plan.controls[t].steer == -0.05);
  }
}

TEST_CASE("solve: reaches a low-cost corridor at least as well as grid search") {
  const VehicleParams p;
  VehicleState s0;
  s0.v = 5.0;
  MppiConfig cfg = MppiConfig::training_budget();
  cfg.horizon = 30;
  cfg.samples = 1024;
  cfg.iterations = 4;
  cfg.seed = 11;
  cfg.threads = 2;
  const SpatioTemporalCostmap cm = corridor_costmap(30, 30);
  const std::vector<Control> warm(30, Control{});
  const TrajectoryPlan plan = solve(s0, cm, s0, warm, cfg, p);
  const double grid_best = exhaustive_constant_control_best(s0, cm, cfg, p);
  CHECK(plan.cost <= grid_best + 1e-12);

  // The plan actually enters the corridor.
  bool visited = false;
  for (const VehicleState& s : plan.states) {
    const auto cell = world_to_cell(s.x, s.y, s0, cm.spec);
    if (cell && cell->col == cm.spec.center_col() + 30) visited = true;
  }
  CHECK(visited);
}

TEST_CASE("solve: best cost is monotone in iteration count on a fixed seed") {
  const VehicleParams p;
  VehicleState s0;
  s0.v = 3.0;
  const SpatioTemporalCostmap cm = corridor_costmap(20, 15);
  const std::vector<Control> warm(20, Control{});
  MppiConfig cfg;
  cfg.horizon = 20;
  cfg.samples = 128;
  cfg.seed = 21;
  cfg.iterations = 1;
  const double c1 = solve(s0, cm, s0, warm, cfg, p).cost;
  cfg.iterations = 2;
  const double c2 = solve(s0, cm, s0, warm, cfg, p).cost;
  CHECK(c2 <= c1 + 1e-12);
}

TEST_CASE("solve: deterministic and thread-count independent") {
  const VehicleParams p;
  VehicleState s0;
  s0.v = 6.0;
  const SpatioTemporalCostmap cm = corridor_costmap(25, 20);
  const std::vector<Control> warm(25, Control{});
  MppiConfig cfg;
  cfg.horizon = 25;
  cfg.samples = 256;
  cfg.iterations = 2;
  cfg.seed = 77;

  cfg.threads = 1;
  const TrajectoryPlan a = solve(s0, cm, s0, warm, cfg, p);
  cfg.threads = 2;
  const TrajectoryPlan b = solve(s0, cm, s0, warm, cfg, p);
  REQUIRE(a.controls.size() == b.controls.size());
  for (size_t t = 0; t < a.controls.size(); ++t) {
    CHECK(a.controls[t].accel == b.controls[t].accel);
    CHECK(a.controls[t].steer == b.controls[t].steer);
  }
  CHECK(a.cost == b.cost);
}

TEST_CASE("controller warm start prefix-matches the previous plan tail") {
  const VehicleParams p;
  MppiConfig cfg;
  cfg.horizon = 12;
  cfg.samples = 64;
  cfg.iterations = 1;
  cfg.execute_steps = 2;
  cfg.seed = 5;
  MppiController ctl(cfg, p);
  VehicleState s0;
  s0.v = 5.0;
  const SpatioTemporalCostmap cm = corridor_costmap(12, 8);
  const TrajectoryPlan first = ctl.plan(s0, cm, s0);
  const auto warm = ctl.pending_warm_start();
  for (int t = 0; t + cfg.execute_steps < 12; ++t) {
    CHECK(warm[t].accel == first.controls[t + cfg.execute_steps].accel);
    CHECK(warm[t].steer == first.controls[t + cfg.execute_steps].steer);
  }
}
