#include "gstz/sim.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gstz/rng.hpp"

namespace gstz {

namespace {

// Seeded uniform draw helper over the counter stream.
struct Draw {
  CounterRng rng;
  uint64_t k = 0;
  explicit Draw(uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * rng.uniform(k++);
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform(0.0, hi - lo + 1.0 - 1e-12));
  }
};

}  // namespace

double idm_accel(double gap, double v, double v_lead, const IdmParams& p) {
  if (gap <= 0.0) return -p.emergency_decel;
  const double dv = v - v_lead;
  const double s_star = p.min_gap + v * p.time_headway +
                        v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  const double ratio = v / p.target_speed;
  const double a =
      p.max_accel * (1.0 - ratio * ratio * ratio * ratio -
                     (s_star / gap) * (s_star / gap));
  return std::max(a, -p.emergency_decel);
}

World make_world(const Scenario& sc) {
  World w;
  w.lanes = sc.lanes;
  w.dt = sc.dt;
  w.seed = sc.seed;
  Draw rnd(derive_seed(sc.seed, 0x3c0de));

  const int n_lanes = sc.lanes.n_lanes;
  const int ego_lane = sc.ego_start_lane.value_or(
      n_lanes <= 2 ? 0 : rnd.uniform_int(1, n_lanes - 2));
  int goal_lane;
  if (sc.goal_lane) {
    goal_lane = *sc.goal_lane;
  } else {
    const int side = rnd.uniform(0.0, 1.0) < 0.5 ? -1 : 1;
    goal_lane = ego_lane + side;
    if (goal_lane < 0 || goal_lane >= n_lanes) goal_lane = ego_lane - side;
  }
  w.goal = GoalLabel{ego_lane, goal_lane};

  w.ego.lane = ego_lane;
  w.ego.state.v = sc.ego_v0.value_or(rnd.uniform(sc.ego_v0_min, sc.ego_v0_max));
  double ex, ey;
  sc.lanes.road_to_world(0.0, sc.lanes.lane_center_lateral(ego_lane), ex, ey);
  w.ego.state.x = ex;
  w.ego.state.y = ey;
  w.ego.state.psi = sc.lanes.direction;

  // Traffic: round-robin over lanes, even slots with jitter, then a minimum
  // spacing sweep and an exclusion bubble around the ego.
  const double half = 0.5 * sc.spawn_span;
  std::vector<std::vector<double>> lane_slots(n_lanes);
  for (int i = 0; i < sc.n_others; ++i) {
    lane_slots[i % n_lanes].push_back(0.0);
  }
  std::vector<std::pair<int, double>> placed;  // (lane, s)
  for (int lane = 0; lane < n_lanes; ++lane) {
    const int m = static_cast<int>(lane_slots[lane].size());
    if (m == 0) continue;
    const double phase = rnd.uniform(0.0, 1.0);  // decorrelate lanes
    std::vector<double> xs(m);
    for (int i = 0; i < m; ++i) {
      double even = -half + sc.spawn_span * (i + phase) / m;
      if (even > half) even -= sc.spawn_span;
      xs[i] = even + rnd.uniform(-5.0, 5.0);
      if (lane == ego_lane && std::abs(xs[i]) < 14.0) {
        xs[i] = (xs[i] >= 0.0 ? 1.0 : -1.0) * (14.0 + rnd.uniform(0.0, 4.0));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (int i = 1; i < m; ++i) {
      xs[i] = std::max(xs[i], xs[i - 1] + 9.0);
    }
    for (double s : xs) placed.emplace_back(lane, s);
  }

  for (const auto& [lane, s] : placed) {
    SimVehicle v;
    v.lane = lane;
    v.idm.target_speed =
        sc.others_speed_base +
        rnd.uniform(-sc.others_speed_jitter, sc.others_speed_jitter);
    v.state.v = std::max(0.0, v.idm.target_speed);
    double x, y;
    sc.lanes.road_to_world(s, sc.lanes.lane_center_lateral(lane), x, y);
    v.state.x = x;
    v.state.y = y;
    v.state.psi = sc.lanes.direction;
    w.others.push_back(v);
  }
  return w;
}

namespace {

struct LeadInfo {
  double gap = std::numeric_limits<double>::infinity();
  double v = 0.0;
};

// Nearest vehicle ahead of longitudinal position `s` whose behavioral lane is
// `lane`; the ego also counts once its footprint overlaps the lane band.
LeadInfo find_lead(const World& w, int self_index, int lane, double s) {
  LeadInfo lead;
  const double len = w.footprint.length;
  for (size_t j = 0; j < w.others.size(); ++j) {
    if (static_cast<int>(j) == self_index) continue;
    const SimVehicle& o = w.others[j];
    if (o.lane != lane) continue;
    const double s2 = w.lanes.longitudinal_of(o.state.x, o.state.y);
    if (s2 <= s) continue;
    const double gap = s2 - s - len;
    if (gap < lead.gap) lead = {gap, o.state.v};
  }
  const double ego_lat = w.lanes.lateral_of(w.ego.state.x, w.ego.state.y);
  const double lane_c = w.lanes.lane_center_lateral(lane);
  if (std::abs(ego_lat - lane_c) <
      0.5 * (w.lanes.lane_width + w.footprint.width)) {
    const double s2 = w.lanes.longitudinal_of(w.ego.state.x, w.ego.state.y);
    if (s2 > s) {
      const double gap = s2 - s - len;
      if (gap < lead.gap) lead = {gap, w.ego.state.v};
    }
  }
  return lead;
}

Control traffic_control(const World& w, int i) {
  const SimVehicle& o = w.others[i];
  const double s = w.lanes.longitudinal_of(o.state.x, o.state.y);
  const LeadInfo lead = find_lead(w, i, o.lane, s);
  Control u;
  u.accel = idm_accel(lead.gap, o.state.v, lead.v, o.idm);
  // Lane-center holding: heading correction plus a Stanley-style cross-track
  // term.
  const double lat = w.lanes.lateral_of(o.state.x, o.state.y);
  const double e_y = w.lanes.lane_center_lateral(o.lane) - lat;
  const double psi_err = wrap_angle(w.lanes.direction - o.state.psi);
  u.steer = psi_err + std::atan2(0.8 * e_y, o.state.v + 1.0);
  return u;
}

void advance_traffic(World& w, const std::vector<Control>& controls) {
  for (size_t i = 0; i < w.others.size(); ++i) {
    SimVehicle& o = w.others[i];
    const Control u =
        clamp_control_rate(controls[i], o.last_ctrl, w.other_params);
    o.state = step(o.state, u, w.dt, w.other_params);
    o.last_ctrl = u;
    o.last_accel = u.accel;
  }
  w.time += w.dt;
  for (const SimVehicle& o : w.others) {
    if (rectangles_overlap(w.ego.state, o.state, w.footprint, 0.0)) {
      w.collision = true;
      break;
    }
  }
}

std::vector<Control> snapshot_traffic_controls(const World& w) {
  std::vector<Control> controls(w.others.size());
  for (size_t i = 0; i < w.others.size(); ++i) {
    controls[i] = traffic_control(w, static_cast<int>(i));
  }
  return controls;
}

}  // namespace

void step_world(World& w, const Control& ego_cmd) {
  const std::vector<Control> controls = snapshot_traffic_controls(w);
  const Control u = clamp_control_rate(ego_cmd, w.ego.last_ctrl, w.ego_params);
  w.ego.state = step(w.ego.state, u, w.dt, w.ego_params);
  w.ego.last_ctrl = u;
  w.ego.last_accel = u.accel;
  w.ego.lane = w.lanes.lane_index_of(w.ego.state.x, w.ego.state.y);
  advance_traffic(w, controls);
}

std::vector<ActorState> estimate_others(const World& w,
                                        const NoiseModel& noise,
                                        uint64_t step_index) {
  std::vector<ActorState> out;
  out.reserve(w.others.size());
  const CounterRng rng(derive_seed(noise.seed, 0x0b5e7));
  for (size_t i = 0; i < w.others.size(); ++i) {
    const SimVehicle& o = w.others[i];
    ActorState a{o.state, o.last_accel};
    if (noise.scale > 0.0) {
      const uint64_t base = (step_index * 1024 + i) * 8;
      a.state.x += noise.scale * noise.sigma[0] * rng.normal(base + 0);
      a.state.y += noise.scale * noise.sigma[1] * rng.normal(base + 1);
      a.state.psi =
          wrap_angle(a.state.psi +
                     noise.scale * noise.sigma[2] * rng.normal(base + 2));
      a.state.v = std::max(
          0.0, a.state.v + noise.scale * noise.sigma[3] * rng.normal(base + 3));
      a.accel += noise.scale * noise.sigma[4] * rng.normal(base + 4);
    }
    out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted expert

QuinticPoly::QuinticPoly(double y0, double dy0, double ddy0, double y1,
                         double dy1, double ddy1, double duration)
    : duration_(duration) {
  const double D = duration;
  a_[0] = y0;
  a_[1] = dy0;
  a_[2] = 0.5 * ddy0;
  Eigen::Matrix3d M;
  M << D * D * D, D * D * D * D, D * D * D * D * D,
      3 * D * D, 4 * D * D * D, 5 * D * D * D * D,
      6 * D, 12 * D * D, 20 * D * D * D;
  Eigen::Vector3d rhs;
  rhs << y1 - (a_[0] + a_[1] * D + a_[2] * D * D),
      dy1 - (a_[1] + 2 * a_[2] * D), ddy1 - 2 * a_[2];
  const Eigen::Vector3d sol = M.partialPivLu().solve(rhs);
  a_[3] = sol(0);
  a_[4] = sol(1);
  a_[5] = sol(2);
}

double QuinticPoly::value(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 0; --i) acc = acc * t + a_[i];
  return acc;
}
double QuinticPoly::d1(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 1; --i) acc = acc * t + i * a_[i];
  return acc;
}
double QuinticPoly::d2(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 2; --i) acc = acc * t + i * (i - 1) * a_[i];
  return acc;
}
double QuinticPoly::d3(double t) const {
  double acc = 0.0;
  for (int i = 5; i >= 3; --i) acc = acc * t + i * (i - 1) * (i - 2) * a_[i];
  return acc;
}

ExpertDriver::ExpertDriver(const World& world, int desired_target_lane,
                           const ExpertConfig& cfg, uint64_t seed)
    : cfg_(cfg), speed_(world.ego.state.v) {
  Draw rnd(derive_seed(seed, 0xe8e7));
  const LaneGeometry& lanes = world.lanes;
  const int source = std::max(0, lanes.lane_index_of(world.ego.state.x,
                                                     world.ego.state.y));
  int target = desired_target_lane;

  // Gap check in the desired lane; fall back to lane keeping without one.
  // Required clearance grows with the closing speed of each neighbor. Once
  // the maneuver is meaningfully underway the driver commits.
  const double lat_now = lanes.lateral_of(world.ego.state.x, world.ego.state.y);
  const bool committed =
      target >= 0 && target < lanes.n_lanes && target != source &&
      std::abs(lat_now - lanes.lane_center_lateral(source)) >
          0.25 * lanes.lane_width;
  if (committed) {
    // keep the desired target
  } else if (target != source && target >= 0 && target < lanes.n_lanes) {
    const double s0 = lanes.longitudinal_of(world.ego.state.x, world.ego.state.y);
    const double v_ego = world.ego.state.v;
    bool ok = true;
    for (const SimVehicle& o : world.others) {
      if (o.lane != target) continue;
      const double s = lanes.longitudinal_of(o.state.x, o.state.y);
      const double gap = std::abs(s - s0) - world.footprint.length;
      const double closing =
          s >= s0 ? std::max(0.0, v_ego - o.state.v)
                  : std::max(0.0, o.state.v - v_ego);
      if (gap < cfg.gap_base + cfg.gap_per_closing_speed * closing) {
        ok = false;
        break;
      }
    }
    if (!ok) target = source;
  } else {
    target = source;
  }
  goal_ = GoalLabel{source, target};

  const double lat0 = lanes.lateral_of(world.ego.state.x, world.ego.state.y);
  const double dlat0 =
      world.ego.state.v *
      std::sin(world.ego.state.psi + world.ego.state.beta - lanes.direction);
  const double lat1 = lanes.lane_center_lateral(target);
  double duration = rnd.uniform(cfg.min_duration, cfg.max_duration);
  if (std::abs(lat1 - lat0) < 0.3 && std::abs(dlat0) < 0.3) {
    duration = 1.5;  // already centered: short recentering arc
  }
  lateral_ = QuinticPoly(lat0, dlat0, 0.0, lat1, 0.0, 0.0, duration);
}

void ExpertDriver::advance(World& w) {
  const std::vector<Control> controls = snapshot_traffic_controls(w);
  const LaneGeometry& lanes = w.lanes;
  const double s = lanes.longitudinal_of(w.ego.state.x, w.ego.state.y);

  // Longitudinal IDM against the nearest lead in the lanes the maneuver
  // touches.
  LeadInfo lead;
  for (int lane : {goal_.source_lane, goal_.target_lane}) {
    for (const SimVehicle& o : w.others) {
      if (o.lane != lane) continue;
      const double s2 = lanes.longitudinal_of(o.state.x, o.state.y);
      if (s2 <= s) continue;
      const double gap = s2 - s - w.footprint.length;
      if (gap < lead.gap) lead = {gap, o.state.v};
    }
  }
  accel_ = idm_accel(lead.gap, speed_, lead.v, cfg_.idm);
  speed_ = std::max(0.0, speed_ + accel_ * w.dt);

  t_ += w.dt;
  const double tc = std::min(t_, lateral_.duration());
  const double ref = lateral_.value(tc);
  const double dref = t_ < lateral_.duration() ? lateral_.d1(tc) : 0.0;
  const double lat_prev = lanes.lateral_of(w.ego.state.x, w.ego.state.y);
  // Track the quintic with a catch-up term; the lateral rate stays within
  // what the current speed supports (no lateral motion while stopped).
  double dlat = dref + 1.5 * (ref - lat_prev);
  const double dlat_cap = 0.6 * speed_;
  dlat = std::clamp(dlat, -dlat_cap, dlat_cap);
  const double lat = lat_prev + dlat * w.dt;
  const double ds = std::sqrt(std::max(speed_ * speed_ - dlat * dlat, 0.0));

  VehicleState next;
  lanes.road_to_world(s + ds * w.dt, lat, next.x, next.y);
  next.psi = wrap_angle(lanes.direction + std::atan2(dlat, std::max(ds, 1e-6)));
  next.v = speed_;
  next.beta = 0.0;
  if (speed_ < 1e-9) next.psi = w.ego.state.psi;
  w.ego.state = next;
  w.ego.last_accel = accel_;
  w.ego.lane = lanes.lane_index_of(next.x, next.y);

  advance_traffic(w, controls);
}

Demonstration scripted_expert(const World& world, int desired_target_lane,
                              int horizon, uint64_t seed,
                              const ExpertConfig& cfg) {
  World copy = world;
  ExpertDriver driver(copy, desired_target_lane, cfg, seed);

  std::vector<ActorState> others;
  others.reserve(copy.others.size());
  for (const SimVehicle& o : copy.others) {
    others.push_back({o.state, o.last_accel});
  }
  Demonstration demo;
  demo.goal = driver.goal();
  demo.obs = rasterize(copy.ego.state, copy.ego.last_accel, others,
                       copy.lanes, demo.goal, GridSpec{});
  demo.states.reserve(horizon + 1);
  demo.states.push_back(copy.ego.state);
  for (int t = 0; t < horizon; ++t) {
    driver.advance(copy);
    demo.states.push_back(copy.ego.state);
  }
  return demo;
}

// ---------------------------------------------------------------------------
// Closed-loop episodes

EpisodeMetrics compute_metrics(const std::vector<StepLog>& logs, double dt) {
  EpisodeMetrics m;
  if (logs.size() < 2) return m;
  const int n = static_cast<int>(logs.size());

  double brake_sum = 0.0, thr_sum = 0.0;
  int brake_n = 0, thr_n = 0;
  for (const StepLog& l : logs) {
    const double a = l.cmd.accel;
    if (a < 0.0) {
      brake_sum += a;
      ++brake_n;
    } else if (a > 0.0) {
      thr_sum += a;
      ++thr_n;
    }
    m.accel_max = std::max(m.accel_max, a);
  }
  m.brake_avg = brake_n ? brake_sum / brake_n : 0.0;
  m.throttle_avg = thr_n ? thr_sum / thr_n : 0.0;

  double bj_sum = 0.0, tj_sum = 0.0;
  int bj_n = 0, tj_n = 0;
  for (int i = 1; i < n; ++i) {
    const double jerk = (logs[i].cmd.accel - logs[i - 1].cmd.accel) / dt;
    if (jerk < 0.0) {
      bj_sum += jerk;
      ++bj_n;
    } else if (jerk > 0.0) {
      tj_sum += jerk;
      ++tj_n;
    }
  }
  m.brake_jerk_avg = bj_n ? bj_sum / bj_n : 0.0;
  m.throttle_jerk_avg = tj_n ? tj_sum / tj_n : 0.0;

  std::vector<double> yaw_rate(n - 1), yaw_acc;
  for (int i = 1; i < n; ++i) {
    yaw_rate[i - 1] = wrap_angle(logs[i].ego.psi - logs[i - 1].ego.psi) / dt;
  }
  for (size_t i = 1; i < yaw_rate.size(); ++i) {
    yaw_acc.push_back((yaw_rate[i] - yaw_rate[i - 1]) / dt);
  }
  for (double a : yaw_acc) {
    m.ang_acc_avg += std::abs(a);
    m.ang_acc_max = std::max(m.ang_acc_max, std::abs(a));
  }
  if (!yaw_acc.empty()) m.ang_acc_avg /= static_cast<double>(yaw_acc.size());
  for (size_t i = 1; i < yaw_acc.size(); ++i) {
    const double j = std::abs(yaw_acc[i] - yaw_acc[i - 1]) / dt;
    m.ang_jerk_avg += j;
    m.ang_jerk_max = std::max(m.ang_jerk_max, j);
  }
  if (yaw_acc.size() > 1) {
    m.ang_jerk_avg /= static_cast<double>(yaw_acc.size() - 1);
  }
  return m;
}

EpisodeResult run_episode(const Scenario& scenario, const EpisodeConfig& cfg,
                          const RewardModel& model) {
  World world = make_world(scenario);
  const int T = model.horizon();

  MppiConfig mppi_cfg = cfg.mppi;
  mppi_cfg.horizon = T;
  mppi_cfg.dt = world.dt;
  mppi_cfg.seed = derive_seed(cfg.seed, 0x9147);
  MppiController mppi(mppi_cfg, world.ego_params);

  WpmpcConfig wp_cfg = cfg.wpmpc;
  wp_cfg.dt = world.dt;
  WpmpcController wpmpc(wp_cfg, world.ego_params, T);

  NoiseModel noise = cfg.noise;
  noise.seed = derive_seed(cfg.seed, 0xae5);

  EpisodeResult result;
  double dwell = 0.0;
  uint64_t step_idx = 0;

  while (world.time < scenario.timeout) {
    const std::vector<ActorState> est =
        estimate_others(world, noise, step_idx++);
    const VehicleState anchor = world.ego.state;
    const ObservationStack obs =
        rasterize(anchor, world.ego.last_accel, est, world.lanes, world.goal,
                  model.grid_spec());
    const SpatioTemporalCostmap costmap = model.forward(obs);

    TrajectoryPlan plan;
    double wp_x = 0.0, wp_y = 0.0;
    int valid_len = 0;
    if (cfg.planner == PlannerKind::kMppi) {
      plan = mppi.plan(anchor, costmap, anchor);
    } else {
      plan = wpmpc.plan(anchor, costmap, anchor, world.ego.last_ctrl);
      const WaypointPath& path = wpmpc.last_waypoints();
      valid_len = path.valid_len;
      if (!path.points.empty()) {
        wp_x = path.points.front().x;
        wp_y = path.points.front().y;
      }
    }

    int authorized = static_cast<int>(plan.states.size());
    if (cfg.safety_layer) {
      std::vector<VehicleState> est_states;
      est_states.reserve(est.size());
      for (const ActorState& a : est) est_states.push_back(a.state);
      authorized = safety_check(plan, est_states, world.dt, cfg.safety_margin,
                                world.footprint);
    }
    const int h =
        cfg.planner == PlannerKind::kMppi ? mppi_cfg.execute_steps : 1;
    const int exec =
        std::min({h, authorized, plan.executed_len,
                  static_cast<int>(plan.controls.size())});

    bool done = false;
    auto apply = [&](const Control& cmd) {
      step_world(world, cmd);
      result.logs.push_back({world.time, world.ego.state, world.ego.last_ctrl,
                             authorized, plan.cost, wp_x, wp_y, valid_len});
      if (world.collision) {
        result.outcome = Outcome::kCollision;
        done = true;
        return;
      }
      if (world.lanes.lane_index_of(world.ego.state.x, world.ego.state.y) ==
          world.goal.target_lane) {
        dwell += world.dt;
        if (dwell >= cfg.success_dwell) {
          result.outcome = Outcome::kSuccess;
          done = true;
        }
      } else {
        dwell = 0.0;
      }
    };

    if (exec < 1) {
      apply(Control{world.ego_params.u_min.accel, 0.0});  // brake in place
    } else {
      for (int t = 0; t < exec && !done; ++t) apply(plan.controls[t]);
    }
    if (done) break;
  }
  result.completion_time = world.time;
  result.metrics = compute_metrics(result.logs, world.dt);
  return result;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kSuccess:
      return "success";
    case Outcome::kCollision:
      return "collision";
    case Outcome::kTimeout:
      return "timeout";
  }
  return "unknown";
}

}  // namespace gstz
