#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gstz/dynamics.hpp"
#include "gstz/grid.hpp"
#include "gstz/irl.hpp"
#include "gstz/mppi.hpp"
#include "gstz/reward_model.hpp"
#include "gstz/safety.hpp"
#include "gstz/wpmpc.hpp"

namespace gstz {

// ---------------------------------------------------------------------------
// Traffic model

struct IdmParams {
  double target_speed = 6.0;   // v0
  double time_headway = 1.5;   // T
  double min_gap = 2.0;        // s0
  double max_accel = 1.5;      // a
  double comfort_decel = 2.0;  // b
  double emergency_decel = 6.0;
};

// Intelligent Driver Model acceleration from bumper gap, own speed, and lead
// speed. Non-positive gaps trigger the emergency deceleration.
double idm_accel(double gap, double v, double v_lead, const IdmParams& p);

struct SimVehicle {
  VehicleState state;
  IdmParams idm;
  int lane = 0;
  double last_accel = 0.0;
  Control last_ctrl{};
};

struct Scenario {
  LaneGeometry lanes{};  // 4 lanes x 3.5 m
  int n_others = 20;
  uint64_t seed = 0;
  double dt = 0.1;
  double timeout = 60.0;
  double spawn_span = 130.0;  // longitudinal extent of initial traffic
  double ego_v0_min = 3.0;
  double ego_v0_max = 7.0;
  std::optional<double> ego_v0;        // overrides the randomized speed
  std::optional<int> ego_start_lane;   // overrides the randomized lane
  std::optional<int> goal_lane;        // overrides the randomized goal
  double others_speed_base = 6.0;
  double others_speed_jitter = 2.0;  // target speed = base + U[-jitter, jitter]
};

struct World {
  LaneGeometry lanes;
  double dt = 0.1;
  double time = 0.0;
  SimVehicle ego;
  std::vector<SimVehicle> others;
  GoalLabel goal;
  VehicleParams ego_params;
  VehicleParams other_params;
  FootprintSpec footprint;
  bool collision = false;
  uint64_t seed = 0;
};

World make_world(const Scenario& scenario);

// Advances every vehicle one step: ego by the (rate-limited) command, others
// by IDM car following with lane-center steering. A vehicle adopts the ego as
// its lead the moment the ego's footprint overlaps its lane ahead of it.
// Latches the collision flag on any ego-other rectangle overlap.
void step_world(World& world, const Control& ego_cmd);

// ---------------------------------------------------------------------------
// Perception noise (applies to planner-visible estimates only)

struct NoiseModel {
  double scale = 0.0;  // c_s
  std::array<double, 5> sigma{0.1, 0.1, 0.02, 1.0, 1.0};  // x y psi v acc
  uint64_t seed = 0;
};

std::vector<ActorState> estimate_others(const World& world,
                                        const NoiseModel& noise,
                                        uint64_t step_index);

// ---------------------------------------------------------------------------
// Scripted expert

// Quintic polynomial with position/velocity/acceleration boundary conditions;
// used for the expert's lateral reference.
class QuinticPoly {
 public:
  QuinticPoly() = default;
  QuinticPoly(double y0, double dy0, double ddy0, double y1, double dy1,
              double ddy1, double duration);
  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;
  double d3(double t) const;
  double duration() const { return duration_; }

 private:
  std::array<double, 6> a_{};
  double duration_ = 1.0;
};

struct ExpertConfig {
  double min_duration = 3.5;
  double max_duration = 5.0;
  // Required clearance in the goal lane scales with how fast the gap closes.
  double gap_base = 5.0;
  double gap_per_closing_speed = 1.2;  // seconds of closing speed
  IdmParams idm{};
};

// Drives the ego along a smooth quintic lateral / IDM longitudinal reference
// while the rest of the world reacts. Replans from the current lateral state,
// so it can be constructed mid-maneuver.
class ExpertDriver {
 public:
  ExpertDriver(const World& world, int desired_target_lane,
               const ExpertConfig& cfg, uint64_t seed);

  // Moves the ego to the next reference state and steps the traffic.
  void advance(World& world);
  const GoalLabel& goal() const { return goal_; }
  double current_accel() const { return accel_; }

 private:
  ExpertConfig cfg_;
  GoalLabel goal_;
  QuinticPoly lateral_;
  double t_ = 0.0;
  double accel_ = 0.0;
  double speed_;
};

// Packages (observation now, T future expert states, goal). Falls back to a
// lane-keep demonstration when the goal lane has no usable gap.
Demonstration scripted_expert(const World& world, int desired_target_lane,
                              int horizon, uint64_t seed,
                              const ExpertConfig& cfg = {});

// ---------------------------------------------------------------------------
// Closed-loop episodes

enum class PlannerKind { kMppi, kWpmpc };
enum class Outcome { kSuccess, kCollision, kTimeout };

struct EpisodeConfig {
  PlannerKind planner = PlannerKind::kWpmpc;
  bool safety_layer = true;
  double safety_margin = 0.5;
  NoiseModel noise{};
  MppiConfig mppi = MppiConfig::online_budget();
  WpmpcConfig wpmpc{};
  int horizon = 30;
  double success_dwell = 1.0;  // seconds centered in the goal lane
  uint64_t seed = 0;
};

struct StepLog {
  double t = 0.0;
  VehicleState ego;
  Control cmd;
  int authorized = 0;
  double plan_cost = 0.0;
  // Waypoint-planner extras (zero when the MPPI planner is active).
  double wp_x = 0.0;
  double wp_y = 0.0;
  int valid_len = 0;
};

struct EpisodeMetrics {
  double brake_avg = 0.0;
  double throttle_avg = 0.0;
  double accel_max = 0.0;
  double brake_jerk_avg = 0.0;
  double throttle_jerk_avg = 0.0;
  double ang_acc_avg = 0.0;
  double ang_acc_max = 0.0;
  double ang_jerk_avg = 0.0;
  double ang_jerk_max = 0.0;
};

struct EpisodeResult {
  Outcome outcome = Outcome::kTimeout;
  double completion_time = 0.0;
  std::vector<StepLog> logs;
  EpisodeMetrics metrics;
};

// Pure function of the logged sequence; recomputable offline.
EpisodeMetrics compute_metrics(const std::vector<StepLog>& logs, double dt);

EpisodeResult run_episode(const Scenario& scenario, const EpisodeConfig& cfg,
                          const RewardModel& model);

const char* outcome_name(Outcome o);

}  // namespace gstz
