#include "gstz/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "gstz/rng.hpp"

namespace gstz {

std::vector<Demonstration> generate_demonstrations(const DatasetGenConfig& cfg) {
  std::vector<Demonstration> demos;
  demos.reserve(cfg.count);
  const CounterRng rng(derive_seed(cfg.seed, 0xda7a));

  for (int i = 0; i < cfg.count; ++i) {
    uint64_t k = static_cast<uint64_t>(i) * 16;
    Scenario sc = cfg.scenario;
    sc.seed = derive_seed(cfg.seed, 0x900 + i);
    sc.ego_v0 = cfg.v0_min + (cfg.v0_max - cfg.v0_min) * rng.uniform(k++);
    World world = make_world(sc);

    int desired = world.goal.target_lane;
    if (rng.uniform(k++) < cfg.lane_keep_fraction) {
      desired = world.goal.source_lane;
    }

    // Warm up with the expert driving so tuples start mid-maneuver too. The
    // tuple's driver re-plans from wherever the warmup left the ego.
    const double warmup = cfg.warmup_max * rng.uniform(k++);
    const int warmup_steps = static_cast<int>(warmup / sc.dt);
    if (warmup_steps > 0) {
      ExpertDriver warm(world, desired, cfg.expert,
                        derive_seed(cfg.seed, 0xaaa0 + i));
      for (int s = 0; s < warmup_steps; ++s) warm.advance(world);
    }

    demos.push_back(scripted_expert(world, desired, cfg.horizon,
                                    derive_seed(cfg.seed, 0xbbb0 + i),
                                    cfg.expert));
  }
  return demos;
}

}  // namespace gstz
