#include "gstz/grid.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gstz/rng.hpp"

using namespace gstz;

namespace {

VehicleState ego_at(double x, double y, double psi, double v = 0.0) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.psi = psi;
  s.v = v;
  return s;
}

LaneGeometry default_lanes() { return LaneGeometry{}; }

}  // namespace

TEST_CASE("world_to_cell frame definition") {
  const GridSpec spec;
  const VehicleState ego = ego_at(12.0, 5.0, 0.0);

  SUBCASE("ego position maps to the center cell") {
    const auto cell = world_to_cell(12.0, 5.0, ego, spec);
    REQUIRE(cell.has_value());
    CHECK(cell->row == spec.center_row());
    CHECK(cell->col == spec.center_col());
  }

  SUBCASE("one meter ahead shifts two columns") {
    const auto cell = world_to_cell(13.0, 5.0, ego, spec);
    REQUIRE(cell.has_value());
    CHECK(cell->row == spec.center_row());
    CHECK(cell->col == spec.center_col() + 2);
  }

  SUBCASE("heading north: north is ahead") {
    // Independent 2x2 rotation: offset (0, 1) rotated by -pi/2 is (1, 0).
    const double psi = std::numbers::pi / 2;
    const double dx = 0.0, dy = 1.0;
    const double ex = std::cos(-psi) * dx - std::sin(-psi) * dy;
    const double ey = std::sin(-psi) * dx + std::cos(-psi) * dy;
    CHECK(ex == doctest::Approx(1.0));
    CHECK(ey == doctest::Approx(0.0).epsilon(1e-12));

    const VehicleState n = ego_at(12.0, 5.0, psi);
    const auto cell = world_to_cell(12.0, 6.0, n, spec);
    REQUIRE(cell.has_value());
    CHECK(cell->col == spec.center_col() + 2);
    CHECK(cell->row == spec.center_row());
  }

  SUBCASE("outside the grid returns nullopt") {
    CHECK_FALSE(world_to_cell(12.0 + 200.0, 5.0, ego, spec).has_value());
    CHECK_FALSE(world_to_cell(12.0, 5.0 + 50.0, ego, spec).has_value());
  }
}

TEST_CASE("world_to_cell inverts cell_to_world on in-bounds cells") {
  const GridSpec spec;
  const VehicleState ego = ego_at(3.0, -2.0, 0.35);
  for (int r = 0; r < spec.height; r += 5) {
    for (int c = 0; c < spec.width; c += 17) {
      double wx, wy;
      cell_to_world(r, c, ego, spec, wx, wy);
      const auto cell = world_to_cell(wx, wy, ego, spec);
      REQUIRE(cell.has_value());
      CHECK(cell->row == r);
      CHECK(cell->col == c);
    }
  }
}

TEST_CASE("rasterize channel contents") {
  const GridSpec spec;
  const LaneGeometry lanes = default_lanes();
  const GoalLabel goal{1, 2};
  const VehicleState ego = ego_at(0.0, lanes.lane_center_lateral(1), 0.0, 6.0);

  SUBCASE("no other vehicles: empty occupancy channel") {
    const ObservationStack obs =
        rasterize(ego, 0.0, {}, lanes, goal, spec);
    for (double v : obs.channels.channel(kOtherOccupancy)) CHECK(v == 0.0);
  }

  SUBCASE("one other vehicle paints its footprint") {
    ActorState other;
    other.state = ego_at(10.0, lanes.lane_center_lateral(2), 0.0, 5.0);
    const ObservationStack obs =
        rasterize(ego, 0.0, std::span(&other, 1), lanes, goal, spec);
    const auto cell = world_to_cell(other.state.x, other.state.y, ego, spec);
    REQUIRE(cell.has_value());
    CHECK(obs.channels.at(kOtherOccupancy, cell->row, cell->col) == 1.0);
    // 4.5 m x 2.0 m at 0.5 m cells: 9 x ~4 cells (cell centers within the
    // half-open footprint box)
    double painted = 0.0;
    for (double v : obs.channels.channel(kOtherOccupancy)) painted += v;
    CHECK(painted >= 9 * 3);
    CHECK(painted <= 9 * 5);
  }

  SUBCASE("velocity channel uses the configured normalization") {
    const ObservationStack obs =
        rasterize(ego, 0.0, {}, lanes, goal, spec);
    // 6 m/s over the 20 m/s scale
    CHECK(obs.channels.at(kVelocity, spec.center_row(), spec.center_col()) ==
          doctest::Approx(6.0 / 20.0));
    CHECK(obs.channels.at(kEgoOccupancy, spec.center_row(), spec.center_col()) ==
          1.0);
  }

  SUBCASE("goal lane is strictly brighter than the source lane") {
    const ObservationStack obs =
        rasterize(ego, 0.0, {}, lanes, goal, spec);
    const auto src = world_to_cell(5.0, lanes.lane_center_lateral(1), ego, spec);
    const auto dst = world_to_cell(5.0, lanes.lane_center_lateral(2), ego, spec);
    REQUIRE(src.has_value());
    REQUIRE(dst.has_value());
    CHECK(obs.channels.at(kLaneMask, dst->row, dst->col) >
          obs.channels.at(kLaneMask, src->row, src->col));
    CHECK(obs.channels.at(kLaneMask, src->row, src->col) == 0.5);
    CHECK(obs.channels.at(kLaneMask, dst->row, dst->col) == 1.0);
  }

  SUBCASE("all channels stay in [0,1]") {
    ActorState other;
    other.state = ego_at(-8.0, lanes.lane_center_lateral(0), 0.4, 30.0);
    other.accel = -9.0;
    const ObservationStack obs =
        rasterize(ego, 2.0, std::span(&other, 1), lanes, goal, spec);
    for (double v : obs.channels.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  SUBCASE("deterministic: identical scene gives bit-identical stacks") {
    ActorState other;
    other.state = ego_at(7.0, lanes.lane_center_lateral(0), 0.1, 4.0);
    const ObservationStack a =
        rasterize(ego, 1.0, std::span(&other, 1), lanes, goal, spec);
    const ObservationStack b =
        rasterize(ego, 1.0, std::span(&other, 1), lanes, goal, spec);
    CHECK(a.channels.data() == b.channels.data());
  }
}

TEST_CASE("rasterize is ego-frame invariant under scene rotation") {
  const GridSpec spec;
  const double alpha = 0.31;  // keeps cell centers away from boundaries
  const GoalLabel goal{1, 2};

  LaneGeometry lanes;
  const VehicleState ego = ego_at(2.3, lanes.lane_center_lateral(1) + 0.12, 0.05, 7.0);
  ActorState other;
  other.state = ego_at(11.2, lanes.lane_center_lateral(2) + 0.07, 0.12, 5.0);
  other.accel = 0.8;
  const ObservationStack base =
      rasterize(ego, 0.5, std::span(&other, 1), lanes, goal, spec);

  // Rotate everything (ego, other, road) by alpha about the origin.
  auto rot = [&](const VehicleState& s) {
    VehicleState r = s;
    r.x = std::cos(alpha) * s.x - std::sin(alpha) * s.y;
    r.y = std::sin(alpha) * s.x + std::cos(alpha) * s.y;
    r.psi = s.psi + alpha;
    return r;
  };
  LaneGeometry rlanes = lanes;
  rlanes.direction = alpha;
  ActorState rother{rot(other.state), other.accel};
  const ObservationStack rotated =
      rasterize(rot(ego), 0.5, std::span(&rother, 1), rlanes, goal, spec);

  int diffs = 0;
  for (size_t i = 0; i < base.channels.data().size(); ++i) {
    if (std::abs(base.channels.data()[i] - rotated.channels.data()[i]) > 1e-9) {
      ++diffs;
    }
  }
  CHECK(diffs == 0);
}

TEST_CASE("rasterize_trajectory one-hot grids") {
  const GridSpec spec;
  const VehicleState anchor = ego_at(0.0, 0.0, 0.0);

  SUBCASE("stationary trajectory marks the center cell") {
    std::vector<VehicleState> traj(10, anchor);
    const ChannelStack grids = rasterize_trajectory(traj, anchor, spec);
    for (int t = 0; t < 10; ++t) {
      CHECK(grids.at(t, spec.center_row(), spec.center_col()) == 1.0);
      double sum = 0.0;
      for (double v : grids.channel(t)) sum += v;
      CHECK(sum == 1.0);
    }
  }

  SUBCASE("leaving the grid zeroes the remaining grids") {
    std::vector<VehicleState> traj;
    for (int t = 0; t < 8; ++t) {
      traj.push_back(ego_at(20.0 * t, 0.0, 0.0));  // exits after a few steps
    }
    const ChannelStack grids = rasterize_trajectory(traj, anchor, spec);
    bool exited = false;
    for (int t = 0; t < 8; ++t) {
      double sum = 0.0;
      for (double v : grids.channel(t)) sum += v;
      if (sum == 0.0) exited = true;
      if (exited) CHECK(sum == 0.0);
    }
    CHECK(exited);
  }

  SUBCASE("straight motion advances columns with the rounding pattern") {
    // 6 m/s, dt 0.1, resolution 0.5: column offset round(1.2 * (t+1)).
    std::vector<VehicleState> traj;
    for (int t = 1; t <= 10; ++t) traj.push_back(ego_at(0.6 * t, 0.0, 0.0));
    const ChannelStack grids = rasterize_trajectory(traj, anchor, spec);
    for (int t = 0; t < 10; ++t) {
      const double offset = 1.2 * (t + 1);
      const int expect =
          spec.center_col() + static_cast<int>(std::floor(offset + 0.5));
      CHECK(grids.at(t, spec.center_row(), expect) == 1.0);
    }
  }
}

TEST_CASE("collapse_min_over_time") {
  GridSpec spec;
  spec.width = 8;
  spec.height = 4;
  SpatioTemporalCostmap cm{spec, 3, ChannelStack(3, 4, 8)};
  for (double& v : cm.maps.data()) v = 1.0;
  cm.maps.at(0, 1, 2) = 0.2;
  cm.maps.at(2, 1, 2) = 0.6;
  cm.maps.at(1, 3, 7) = 0.0;
  const SpatioTemporalCostmap flat = collapse_min_over_time(cm);
  for (int t = 0; t < 3; ++t) {
    CHECK(flat.maps.at(t, 1, 2) == 0.2);
    CHECK(flat.maps.at(t, 3, 7) == 0.0);
    CHECK(flat.maps.at(t, 0, 0) == 1.0);
  }
}
