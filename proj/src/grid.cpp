#include "gstz/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gstz {

namespace {

// Round half away from zero so quantization is symmetric about the ego.
int round_away(double v) {
  return static_cast<int>(v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

void world_to_ego_frame(double wx, double wy, const VehicleState& ego,
                        double& ex, double& ey) {
  const double dx = wx - ego.x;
  const double dy = wy - ego.y;
  const double c = std::cos(-ego.psi);
  const double s = std::sin(-ego.psi);
  ex = c * dx - s * dy;
  ey = s * dx + c * dy;
}

}  // namespace

double LaneGeometry::lateral_of(double x, double y) const {
  return -(x - origin_x) * std::sin(direction) +
         (y - origin_y) * std::cos(direction);
}

double LaneGeometry::longitudinal_of(double x, double y) const {
  return (x - origin_x) * std::cos(direction) +
         (y - origin_y) * std::sin(direction);
}

int LaneGeometry::lane_index_of(double x, double y) const {
  const double l = lateral_of(x, y);
  if (l < 0.0 || l >= n_lanes * lane_width) return -1;
  return static_cast<int>(l / lane_width);
}

void LaneGeometry::road_to_world(double s, double l, double& x,
                                 double& y) const {
  x = origin_x + s * std::cos(direction) - l * std::sin(direction);
  y = origin_y + s * std::sin(direction) + l * std::cos(direction);
}

double LaneGeometry::offset_to_nearest_center(double x, double y) const {
  const double l = lateral_of(x, y);
  double best = std::numeric_limits<double>::max();
  for (int i = 0; i < n_lanes; ++i) {
    best = std::min(best, std::abs(l - lane_center_lateral(i)));
  }
  return best;
}

std::optional<CellIndex> world_to_cell(double wx, double wy,
                                       const VehicleState& ego,
                                       const GridSpec& spec) {
  double ex, ey;
  world_to_ego_frame(wx, wy, ego, ex, ey);
  const int col = spec.center_col() + round_away(ex / spec.resolution);
  const int row = spec.center_row() + round_away(ey / spec.resolution);
  if (row < 0 || row >= spec.height || col < 0 || col >= spec.width) {
    return std::nullopt;
  }
  return CellIndex{row, col};
}

void cell_to_world(double row, double col, const VehicleState& ego,
                   const GridSpec& spec, double& wx, double& wy) {
  const double ex = (col - spec.center_col()) * spec.resolution;
  const double ey = (row - spec.center_row()) * spec.resolution;
  const double c = std::cos(ego.psi);
  const double s = std::sin(ego.psi);
  wx = ego.x + c * ex - s * ey;
  wy = ego.y + s * ex + c * ey;
}

namespace {

// Paints an axis-aligned rectangle in the ego frame; returns the painted cell
// range, empty if fully outside.
struct CellRect {
  int r0, r1, c0, c1;
  bool empty;
};

CellRect footprint_cells(double ex, double ey, const GridSpec& spec,
                         const RasterConfig& cfg) {
  const double hl = 0.5 * cfg.vehicle_length;
  const double hw = 0.5 * cfg.vehicle_width;
  CellRect r{};
  // Cell (row, col) center is at ((col-cc)*res, (row-cr)*res); a cell belongs
  // to the footprint when its center falls inside the rectangle.
  const double res = spec.resolution;
  r.c0 = std::max(0, static_cast<int>(std::ceil((ex - hl) / res - 1e-9)) +
                         spec.center_col());
  r.c1 = std::min(spec.width - 1,
                  static_cast<int>(std::floor((ex + hl) / res + 1e-9)) +
                      spec.center_col());
  r.r0 = std::max(0, static_cast<int>(std::ceil((ey - hw) / res - 1e-9)) +
                         spec.center_row());
  r.r1 = std::min(spec.height - 1,
                  static_cast<int>(std::floor((ey + hw) / res + 1e-9)) +
                      spec.center_row());
  r.empty = r.c0 > r.c1 || r.r0 > r.r1;
  return r;
}

}  // namespace

ObservationStack rasterize(const VehicleState& ego, double ego_accel,
                           std::span<const ActorState> others,
                           const LaneGeometry& lanes, const GoalLabel& goal,
                           const GridSpec& spec, const RasterConfig& cfg) {
  ObservationStack obs{spec, ChannelStack(kObsChannels, spec.height, spec.width)};
  ChannelStack& ch = obs.channels;

  const auto norm_speed = [&](double v) {
    return std::clamp(v / cfg.max_speed, 0.0, 1.0);
  };
  const auto norm_accel = [&](double a) {
    return std::clamp((a + cfg.max_accel) / (2.0 * cfg.max_accel), 0.0, 1.0);
  };
  const auto norm_heading = [&](double rel) {
    return (wrap_angle(rel) + std::numbers::pi) / (2.0 * std::numbers::pi);
  };

  const auto paint_vehicle = [&](const VehicleState& s, double accel,
                                 int occ_channel) {
    double ex, ey;
    world_to_ego_frame(s.x, s.y, ego, ex, ey);
    const CellRect fr = footprint_cells(ex, ey, spec, cfg);
    if (fr.empty) return;
    const double vel = norm_speed(s.v);
    const double acc = norm_accel(accel);
    const double hdg = norm_heading(s.psi - ego.psi);
    for (int r = fr.r0; r <= fr.r1; ++r) {
      for (int c = fr.c0; c <= fr.c1; ++c) {
        ch.at(occ_channel, r, c) = 1.0;
        ch.at(kVelocity, r, c) = vel;
        ch.at(kAcceleration, r, c) = acc;
        ch.at(kHeading, r, c) = hdg;
      }
    }
  };

  paint_vehicle(ego, ego_accel, kEgoOccupancy);
  for (const ActorState& a : others) {
    paint_vehicle(a.state, a.accel, kOtherOccupancy);
  }

  // Full-field lane channels, evaluated at cell centers in world coordinates.
  const double half_lane = 0.5 * lanes.lane_width;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      double wx, wy;
      cell_to_world(r, c, ego, spec, wx, wy);
      const double off = lanes.offset_to_nearest_center(wx, wy);
      ch.at(kLaneOffset, r, c) = std::clamp(off / half_lane, 0.0, 1.0);
      const int lane = lanes.lane_index_of(wx, wy);
      if (lane == goal.source_lane) {
        ch.at(kLaneMask, r, c) = cfg.lane_mask_source;
      }
      if (lane == goal.target_lane) {
        ch.at(kLaneMask, r, c) = cfg.lane_mask_goal;  // goal wins when equal
      }
    }
  }
  return obs;
}

ChannelStack rasterize_trajectory(std::span<const VehicleState> traj,
                                  const VehicleState& anchor,
                                  const GridSpec& spec) {
  ChannelStack out(static_cast<int>(traj.size()), spec.height, spec.width);
  for (size_t t = 0; t < traj.size(); ++t) {
    if (auto cell = world_to_cell(traj[t].x, traj[t].y, anchor, spec)) {
      out.at(static_cast<int>(t), cell->row, cell->col) = 1.0;
    }
  }
  return out;
}

SpatioTemporalCostmap collapse_min_over_time(const SpatioTemporalCostmap& in) {
  SpatioTemporalCostmap out{in.spec, in.horizon,
                            ChannelStack(in.horizon, in.spec.height, in.spec.width)};
  const int n = in.spec.cells();
  std::vector<double> mins(n, 1.0);
  for (int t = 0; t < in.horizon; ++t) {
    auto m = in.maps.channel(t);
    for (int i = 0; i < n; ++i) mins[i] = std::min(mins[i], m[i]);
  }
  for (int t = 0; t < in.horizon; ++t) {
    auto m = out.maps.channel(t);
    std::copy(mins.begin(), mins.end(), m.begin());
  }
  return out;
}

}  // namespace gstz
