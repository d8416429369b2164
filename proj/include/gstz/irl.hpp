#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gstz/grid.hpp"
#include "gstz/mppi.hpp"
#include "gstz/reward_model.hpp"

namespace gstz {

// One training tuple: the observation at time t, the expert trajectory over
// the next T steps (T+1 states including the start), and the goal label.
struct Demonstration {
  ObservationStack obs;
  std::vector<VehicleState> states;
  GoalLabel goal;
};

// Per-timestep visitation-probability grids. Spatiotemporal stacks are
// one-hot (or empty where the trajectory left the grid); non-temporal stacks
// repeat the discounted visitation sum across all timesteps.
using SvfStack = ChannelStack;

enum class SvfMode { kSpatioTemporal, kNonTemporal };

struct IrlConfig {
  SvfMode mode = SvfMode::kSpatioTemporal;
  double gamma = 1.0;   // discount, non-temporal mode only
  double c_zero = -1.0; // < 0 selects the default T / (width * height)
  int learner_rollouts = 16;  // K optimal-trajectory samples for E[mu]
  int epochs = 50;
  MppiConfig mppi = MppiConfig::training_budget();
  AdamConfig adam{};
  VehicleParams vehicle{};
  uint64_t seed = 0;
  int threads = 1;

  double zeroing_weight(int horizon, const GridSpec& spec) const {
    return c_zero >= 0.0 ? c_zero
                         : static_cast<double>(horizon) / spec.cells();
  }
};

SvfStack demo_svf(const Demonstration& demo, const GridSpec& spec,
                  SvfMode mode, double gamma = 1.0);

// Estimates the expected learner SVF by running the forward solver K times
// with independent noise streams from the demonstration's initial state and
// averaging the per-timestep visitation grids. Rollouts that produce
// non-finite states are skipped (reported on stderr).
SvfStack learner_svf(const RewardModel& model, const Demonstration& demo,
                     const IrlConfig& cfg, uint64_t rollout_seed);
SvfStack learner_svf_from_costmap(const SpatioTemporalCostmap& costmap,
                                  const Demonstration& demo,
                                  const IrlConfig& cfg, uint64_t rollout_seed);

// Gradient of the negated demonstration likelihood w.r.t. the reward R:
// -(mu_D - E[mu]) per cell per timestep. The caller flips the sign to get the
// cost-map gradient (R = 1 - J).
ChannelStack medirl_gradient(const SvfStack& demo, const SvfStack& learner);

// Gradient of the zeroing penalty w.r.t. R: 2 * c_zero * R on cells unvisited
// by both the demonstration and the learner, zero elsewhere.
ChannelStack zeroing_gradient(const SvfStack& demo, const SvfStack& learner,
                              const SpatioTemporalCostmap& costmap,
                              double c_zero);

struct EpochMetrics {
  int epoch = 0;
  double ld_proxy = 0.0;     // sum over cells of (mu_D - E[mu]) * R
  double l_zero = 0.0;       // c_zero * sum over unvisited cells of R^2
  double svf_overlap = 0.0;  // mean per-timestep min-mass intersection
  double grad_norm = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
};

TrainResult train(std::span<const Demonstration> dataset, RewardModel& model,
                  const IrlConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace gstz
