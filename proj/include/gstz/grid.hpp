#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gstz/dynamics.hpp"

namespace gstz {

// Ego-centric grid: ego at the center cell, ego heading mapped to +columns
// (grid East). Rows grow toward ego-left.
struct GridSpec {
  int width = 200;   // cells along ego heading
  int height = 32;   // cells lateral
  double resolution = 0.5;  // meters per cell

  int center_row() const { return height / 2; }
  int center_col() const { return width / 2; }
  int cells() const { return width * height; }
};

struct CellIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CellIndex&) const = default;
};

// Dense C x H x W scalar stack, row-major within each channel.
class ChannelStack {
 public:
  ChannelStack() = default;
  ChannelStack(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<size_t>(channels) * height * width, 0.0) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int c, int r, int col) { return data_[idx(c, r, col)]; }
  double at(int c, int r, int col) const { return data_[idx(c, r, col)]; }

  std::span<double> channel(int c) {
    return {data_.data() + static_cast<size_t>(c) * height_ * width_,
            static_cast<size_t>(height_) * width_};
  }
  std::span<const double> channel(int c) const {
    return {data_.data() + static_cast<size_t>(c) * height_ * width_,
            static_cast<size_t>(height_) * width_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ChannelStack& o) const {
    return channels_ == o.channels_ && height_ == o.height_ &&
           width_ == o.width_;
  }

 private:
  size_t idx(int c, int r, int col) const {
    return (static_cast<size_t>(c) * height_ + r) * width_ + col;
  }
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Straight multi-lane road. Lane i occupies lateral band [i*w, (i+1)*w) in
// the road frame; direction is the road heading in world coordinates.
struct LaneGeometry {
  int n_lanes = 4;
  double lane_width = 3.5;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double direction = 0.0;  // rad, world frame

  double lateral_of(double x, double y) const;
  double longitudinal_of(double x, double y) const;
  // -1 when outside the road band.
  int lane_index_of(double x, double y) const;
  double lane_center_lateral(int lane) const {
    return (lane + 0.5) * lane_width;
  }
  // World position at (longitudinal s, lateral l).
  void road_to_world(double s, double l, double& x, double& y) const;
  // Distance to the nearest lane centerline.
  double offset_to_nearest_center(double x, double y) const;
};

enum ObsChannel : int {
  kEgoOccupancy = 0,
  kOtherOccupancy = 1,
  kVelocity = 2,
  kAcceleration = 3,
  kHeading = 4,
  kLaneOffset = 5,
  kLaneMask = 6,
  kObsChannels = 7,
};

struct ObservationStack {
  GridSpec spec;
  ChannelStack channels;  // kObsChannels x H x W, values in [0, 1]
};

// T stacked position-cost grids, one per future timestep, J in [0, 1].
struct SpatioTemporalCostmap {
  GridSpec spec;
  int horizon = 0;
  ChannelStack maps;  // horizon x H x W
};

// Normalization and footprint constants used by rasterize. The channels are
// normalized to [0, 1]; these set the scales.
struct RasterConfig {
  double max_speed = 20.0;
  double max_accel = 3.0;
  double vehicle_length = 4.5;
  double vehicle_width = 2.0;
  double lane_mask_source = 0.5;
  double lane_mask_goal = 1.0;
};

// Other-vehicle snapshot as seen by the ego: kinematic state plus the
// estimated longitudinal acceleration painted into the accel channel.
struct ActorState {
  VehicleState state;
  double accel = 0.0;
};

struct GoalLabel {
  int source_lane = 0;
  int target_lane = 0;
  bool is_lane_change() const { return source_lane != target_lane; }
};

// World position -> cell, rotating the offset into the ego frame. Returns
// nullopt when outside the grid.
std::optional<CellIndex> world_to_cell(double wx, double wy,
                                       const VehicleState& ego,
                                       const GridSpec& spec);

// Center of a cell in world coordinates (fractional indices allowed).
void cell_to_world(double row, double col, const VehicleState& ego,
                   const GridSpec& spec, double& wx, double& wy);

ObservationStack rasterize(const VehicleState& ego, double ego_accel,
                           std::span<const ActorState> others,
                           const LaneGeometry& lanes, const GoalLabel& goal,
                           const GridSpec& spec, const RasterConfig& cfg = {});

// Per-timestep one-hot visitation grids of a trajectory in the anchor's ego
// frame. Grid t marks the cell of traj[t] when in bounds, else stays zero.
ChannelStack rasterize_trajectory(std::span<const VehicleState> traj,
                                  const VehicleState& anchor,
                                  const GridSpec& spec);

// Ablation transform: every timestep replaced by the elementwise minimum
// over all timesteps (drops the temporal information).
SpatioTemporalCostmap collapse_min_over_time(const SpatioTemporalCostmap& in);

}  // namespace gstz
