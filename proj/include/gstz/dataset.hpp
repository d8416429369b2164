#pragma once

#include <cstdint>
#include <vector>

#include "gstz/irl.hpp"
#include "gstz/sim.hpp"

namespace gstz {

// Scripted-expert dataset generation: each demonstration comes from its own
// randomized world, advanced by a random warmup so the tuples cover the
// approach, mid-maneuver, and settled phases of lane changes.
struct DatasetGenConfig {
  int count = 50;
  uint64_t seed = 0;
  int horizon = 30;
  Scenario scenario = lighter_traffic();
  double lane_keep_fraction = 0.15;
  double v0_min = 0.0;
  double v0_max = 8.0;
  double warmup_max = 4.0;  // seconds of expert driving before the tuple
  ExpertConfig expert{};

  // Demonstrations need usable gaps in the goal lane; the evaluation-density
  // traffic leaves almost none at t=0, so the recording runs are sparser.
  static Scenario lighter_traffic() {
    Scenario sc;
    sc.n_others = 10;
    sc.spawn_span = 160.0;
    return sc;
  }
};

std::vector<Demonstration> generate_demonstrations(const DatasetGenConfig& cfg);

}  // namespace gstz
