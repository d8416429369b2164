#pragma once

#include <span>
#include <vector>

#include "gstz/dynamics.hpp"
#include "gstz/grid.hpp"
#include "gstz/mppi.hpp"

namespace gstz {

// Per-timestep reference positions extracted from the costmap, world frame.
struct Waypoint {
  double x = 0.0;
  double y = 0.0;
};

struct WaypointPath {
  std::vector<Waypoint> points;
  int valid_len = 0;  // feasibility-truncated prefix length
};

struct WpmpcConfig {
  double low_cost_quantile = 0.05;  // per-grid threshold for the low-cost set
  double flat_grid_range = 1e-6;    // below this spread a grid is degenerate
  double v_max = 25.0;              // reachability speed bound
  int linearization_passes = 3;
  bool squared_objective = true;  // false: IRLS reweighting toward the 2-norm
  double dt = 0.1;
};

// Cost-weighted centroid of each timestep's low-cost region, converted to the
// anchor's world frame. Extraction stops at the first degenerate (flat) grid;
// a degenerate first grid yields an empty path.
WaypointPath extract_waypoints(const SpatioTemporalCostmap& costmap,
                               const VehicleState& anchor,
                               const WpmpcConfig& cfg = {});

// Truncates the path to the longest prefix whose consecutive pairs are
// reachable in one step: spacing within v_max*dt (closed bound) and direction
// change inside a conservative steering envelope.
WaypointPath check_feasibility(const WaypointPath& path,
                               const VehicleState& s0, double dt,
                               const VehicleParams& params,
                               const WpmpcConfig& cfg = {});

// Reference-tracking MPC over the linearized bicycle model: iterated
// linearization around the running solution, each pass a box/rate-constrained
// QP solved by a dense active-set method. Plan cost is the mean Euclidean
// tracking error. Falls back to a braking plan when the QP fails.
TrajectoryPlan qp_track(const WaypointPath& path, const VehicleState& s0,
                        double dt, const VehicleParams& params,
                        const Control& prev_ctrl = {},
                        const WpmpcConfig& cfg = {});

// Rate-feasible stop: ramp acceleration to full braking, steer back to zero.
TrajectoryPlan braking_plan(const VehicleState& s0, const Control& prev_ctrl,
                            double dt, int horizon, const VehicleParams& params);

// Receding-horizon wrapper mirroring MppiController.
class WpmpcController {
 public:
  WpmpcController(WpmpcConfig cfg, VehicleParams params, int horizon)
      : cfg_(cfg), params_(params), horizon_(horizon) {}

  TrajectoryPlan plan(const VehicleState& s,
                      const SpatioTemporalCostmap& costmap,
                      const VehicleState& anchor, const Control& prev_ctrl);
  const WaypointPath& last_waypoints() const { return last_path_; }
  void reset() { last_path_ = {}; }

 private:
  WpmpcConfig cfg_;
  VehicleParams params_;
  int horizon_;
  WaypointPath last_path_;
};

}  // namespace gstz
