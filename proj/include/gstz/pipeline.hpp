#pragma once

#include <string>
#include <vector>

#include "gstz/config.hpp"
#include "gstz/dataset.hpp"
#include "gstz/irl.hpp"
#include "gstz/reward_model.hpp"
#include "gstz/sim.hpp"

namespace gstz {

// ---------------------------------------------------------------------------
// Seeded evaluation batches (one row of the comparison table)

struct BatchConfig {
  std::string label = "batch";
  int episodes = 50;
  Scenario scenario{};
  EpisodeConfig episode{};
  uint64_t seed = 0;
  int threads = 1;
};

struct BatchSummary {
  std::string label;
  int episodes = 0;
  int successes = 0;
  int collisions = 0;
  int timeouts = 0;
  double time_avg = 0.0;  // mean completion time of successful episodes
  EpisodeMetrics mean;    // avg columns: per-episode means; max columns:
                          // per-episode maxima, both averaged over episodes
  double success_rate() const {
    return episodes ? 100.0 * successes / episodes : 0.0;
  }
  double collision_rate() const {
    return episodes ? 100.0 * collisions / episodes : 0.0;
  }
  double timeout_rate() const {
    return episodes ? 100.0 * timeouts / episodes : 0.0;
  }
};

// Episode i runs the scenario seeded with derive_seed(cfg.seed, i); identical
// seeds give identical batches regardless of the worker count.
BatchSummary run_batch(const BatchConfig& cfg, const RewardModel& model,
                       std::vector<EpisodeResult>* episodes_out = nullptr);

extern const std::vector<std::string> kSummaryColumns;
std::vector<std::string> summary_row(const BatchSummary& s);
void write_summary_csv(const std::vector<BatchSummary>& rows,
                       const std::string& path, const std::string& hash_hex);

// ---------------------------------------------------------------------------
// Config assembly (shared by the CLI and the acceptance suite)

GridSpec grid_spec_from(const Config& c);
Scenario scenario_from(const Config& c);
IrlConfig irl_config_from(const Config& c);
EpisodeConfig episode_config_from(const Config& c);
DatasetGenConfig dataset_config_from(const Config& c);
std::unique_ptr<RewardModel> model_from(const Config& c);

}  // namespace gstz
