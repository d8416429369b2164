#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gstz/dynamics.hpp"
#include "gstz/grid.hpp"

namespace gstz {

struct MppiConfig {
  int samples = 512;
  int iterations = 2;
  double sigma_accel = 1.0;   // noise std on the acceleration channel
  double sigma_steer = 0.15;  // noise std on the steering channel
  double lambda = 1.0;        // inverse temperature
  int horizon = 30;           // T
  int execute_steps = 1;      // h, steps executed per replan
  double terminal_weight = 10.0;  // c_T
  double dt = 0.1;
  uint64_t seed = 0;
  int threads = 1;

  // Offline budget used while training (no real-time requirement).
  static MppiConfig training_budget() {
    MppiConfig c;
    c.samples = 4096;
    c.iterations = 8;
    return c;
  }
  // Budget sized for a ~100 ms replan cycle.
  static MppiConfig online_budget() { return MppiConfig{}; }
};

struct TrajectoryPlan {
  std::vector<VehicleState> states;  // rollout of controls from the start state
  std::vector<Control> controls;
  double cost = 0.0;
  int executed_len = 0;  // steps authorized for execution (<= horizon)
};

// Position cost of a trajectory under a spatiotemporal costmap anchored at
// the observation pose: sum of per-step map lookups plus a weighted terminal
// term on the last map. Out-of-grid positions cost 1 (the maximum).
double trajectory_cost(std::span<const VehicleState> states,
                       const SpatioTemporalCostmap& costmap,
                       const VehicleState& anchor, double terminal_weight);

// Path-integral update: sample noisy control sequences, weight by
// exponentiated negative cost, average, iterate. Returns the best plan seen
// (warm start included), so the tracked cost never increases with more
// iterations. Degenerate weights fall back to the min-cost sample.
TrajectoryPlan solve(const VehicleState& s0,
                     const SpatioTemporalCostmap& costmap,
                     const VehicleState& anchor,
                     std::span<const Control> warm_start,
                     const MppiConfig& cfg, const VehicleParams& params);

// Drop the first h controls and pad by repeating the last one.
std::vector<Control> shift_controls(std::span<const Control> u, int h);

// Receding-horizon wrapper: keeps the previous solution, shifts it by h each
// cycle, and solves against the freshly predicted costmap.
class MppiController {
 public:
  MppiController(MppiConfig cfg, VehicleParams params)
      : cfg_(cfg), params_(params) {}

  TrajectoryPlan plan(const VehicleState& s,
                      const SpatioTemporalCostmap& costmap,
                      const VehicleState& anchor);
  std::vector<Control> pending_warm_start() const;
  void reset();

 private:
  MppiConfig cfg_;
  VehicleParams params_;
  std::vector<Control> prev_;
  uint64_t cycle_ = 0;
};

}  // namespace gstz
